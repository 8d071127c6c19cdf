#include "din/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace din {

namespace {

template <typename T>
using Impl = detail::TensorImpl<T>;
template <typename T>
using ImplPtr = std::shared_ptr<Impl<T>>;
template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

[[noreturn]] void shape_error(const std::string& op, const std::string& what) {
    throw std::invalid_argument(op + ": " + what);
}

// Wraps an op result; attaches a graph node when any input needs gradients.
template <typename T>
Tensor<T> record(Shape shape, std::vector<T> values, const char* op,
                 std::vector<ImplPtr<T>> inputs, typename detail::Node<T>::BackwardFn fn) {
    Tensor<T> out(shape, std::move(values));
    const bool track = std::any_of(inputs.begin(), inputs.end(),
                                   [](const ImplPtr<T>& p) { return p->requires_grad; });
    if (track) {
        auto node = std::make_shared<detail::Node<T>>();
        node->op = op;
        node->inputs = std::move(inputs);
        node->backward = std::move(fn);
        out.impl()->requires_grad = true;
        out.impl()->grad_fn = std::move(node);
    }
    return out;
}

template <typename T>
const Impl<T>& impl_of(const Tensor<T>& t, const char* op) {
    if (!t.defined()) shape_error(op, "undefined tensor argument");
    return *t.impl();
}

std::size_t conv_out(std::size_t in, std::size_t k, int stride) {
    const std::size_t pad = k / 2;
    return (in + 2 * pad - k) / static_cast<std::size_t>(stride) + 1;
}

struct ConvGeometry {
    std::size_t cin, h, w, k, ho, wo;
    int stride;
    std::size_t rows() const { return cin * k * k; }
    std::size_t cols() const { return ho * wo; }
    bool direct() const { return k == 1 && stride == 1; }
};

// Output columns [lo, hi) read inside the row for kernel offset kx.
inline std::pair<std::size_t, std::size_t> valid_span(const ConvGeometry& g, std::size_t kx) {
    const auto pad = static_cast<std::ptrdiff_t>(g.k / 2);
    const auto s = static_cast<std::ptrdiff_t>(g.stride);
    const auto off = static_cast<std::ptrdiff_t>(kx) - pad;
    const auto w = static_cast<std::ptrdiff_t>(g.w);
    std::ptrdiff_t lo = off < 0 ? (-off + s - 1) / s : 0;
    std::ptrdiff_t hi = (w - 1 - off) / s + 1;
    lo = std::min<std::ptrdiff_t>(lo, static_cast<std::ptrdiff_t>(g.wo));
    hi = std::clamp<std::ptrdiff_t>(hi, lo, static_cast<std::ptrdiff_t>(g.wo));
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

template <typename T>
void im2col(const T* src, const ConvGeometry& g, T* cols) {
    const auto pad = static_cast<std::ptrdiff_t>(g.k / 2);
    const auto h = static_cast<std::ptrdiff_t>(g.h);
    T* dst = cols;
    for (std::size_t c = 0; c < g.cin; ++c) {
        const T* plane = src + c * g.h * g.w;
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                const auto [lo, hi] = valid_span(g, kx);
                const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kx) - pad;
                for (std::size_t oy = 0; oy < g.ho; ++oy, dst += g.wo) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
                    if (iy < 0 || iy >= h) {
                        std::fill_n(dst, g.wo, T(0));
                        continue;
                    }
                    const T* row = plane + iy * static_cast<std::ptrdiff_t>(g.w) + off;
                    std::fill(dst, dst + lo, T(0));
                    if (g.stride == 1) {
                        std::copy(row + lo, row + hi, dst + lo);
                    } else {
                        for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = row[ox * g.stride];
                    }
                    std::fill(dst + hi, dst + g.wo, T(0));
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* dst) {
    const auto pad = static_cast<std::ptrdiff_t>(g.k / 2);
    const auto h = static_cast<std::ptrdiff_t>(g.h);
    const T* src = cols;
    for (std::size_t c = 0; c < g.cin; ++c) {
        T* plane = dst + c * g.h * g.w;
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                const auto [lo, hi] = valid_span(g, kx);
                const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kx) - pad;
                for (std::size_t oy = 0; oy < g.ho; ++oy, src += g.wo) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
                    if (iy < 0 || iy >= h) continue;
                    T* row = plane + iy * static_cast<std::ptrdiff_t>(g.w) + off;
                    for (std::size_t ox = lo; ox < hi; ++ox) row[ox * g.stride] += src[ox];
                }
            }
        }
    }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride) {
    const char* op = "conv2d";
    const auto& x = impl_of(input, op);
    const auto& wt = impl_of(weight, op);
    const auto& b = impl_of(bias, op);
    const Shape& xs = x.shape;
    const Shape& ws = wt.shape;
    if (stride != 1 && stride != 2) shape_error(op, "stride must be 1 or 2, got " + std::to_string(stride));
    if (ws.h != ws.w || (ws.h != 1 && ws.h != 3))
        shape_error(op, "kernel must be 1x1 or 3x3, weight shape is " + ws.str());
    if (ws.c != xs.c)
        shape_error(op, "input channels " + std::to_string(xs.c) + " do not match weight Cin " +
                            std::to_string(ws.c));
    if (b.shape.numel() != ws.n)
        shape_error(op, "bias length " + std::to_string(b.shape.numel()) +
                            " does not match weight Cout " + std::to_string(ws.n));

    const ConvGeometry g{xs.c, xs.h, xs.w, ws.h, conv_out(xs.h, ws.h, stride),
                         conv_out(xs.w, ws.w, stride), stride};
    const std::size_t cout = ws.n;
    const Shape out_shape{xs.n, cout, g.ho, g.wo};
    std::vector<T> out(out_shape.numel());

    const auto K = static_cast<Eigen::Index>(g.rows());
    const auto P = static_cast<Eigen::Index>(g.cols());
    const auto M = static_cast<Eigen::Index>(cout);
    ConstMatMap<T> wmat(wt.data.data(), M, K);
    const std::size_t col_size = g.rows() * g.cols();
    auto cols = std::make_shared<std::vector<T>>(g.direct() ? 0 : xs.n * col_size);

    for (std::size_t n = 0; n < xs.n; ++n) {
        const T* src = x.data.data() + n * xs.c * xs.plane();
        const T* colp = src;
        if (!g.direct()) {
            colp = cols->data() + n * col_size;
            im2col(src, g, cols->data() + n * col_size);
        }
        MatMap<T> omat(out.data() + n * cout * g.cols(), M, P);
        omat.noalias() = wmat * ConstMatMap<T>(colp, K, P);
        for (Eigen::Index m = 0; m < M; ++m) omat.row(m).array() += b.data[static_cast<std::size_t>(m)];
    }

    return record<T>(
        out_shape, std::move(out), op, {input.impl(), weight.impl(), bias.impl()},
        [g, cout, cols](detail::Node<T>& node, std::span<const T> gout) {
            auto& xi = *node.inputs[0];
            auto& wi = *node.inputs[1];
            auto& bi = *node.inputs[2];
            const auto K = static_cast<Eigen::Index>(g.rows());
            const auto P = static_cast<Eigen::Index>(g.cols());
            const auto M = static_cast<Eigen::Index>(cout);
            const std::size_t batch = xi.shape.n;
            const std::size_t in_stride = xi.shape.c * xi.shape.plane();
            ConstMatMap<T> wmat(wi.data.data(), M, K);
            const std::size_t col_size = g.rows() * g.cols();
            std::vector<T> scratch(g.direct() ? 0 : col_size);

            std::span<T> gw = wi.requires_grad ? wi.grad_buffer() : std::span<T>{};
            std::span<T> gb = bi.requires_grad ? bi.grad_buffer() : std::span<T>{};
            std::span<T> gx = xi.requires_grad ? xi.grad_buffer() : std::span<T>{};

            for (std::size_t n = 0; n < batch; ++n) {
                ConstMatMap<T> gmat(gout.data() + n * cout * g.cols(), M, P);
                if (!gb.empty()) {
                    // Plain loop: Eigen's vectorised sum depends on the buffer's alignment.
                    for (std::size_t m = 0; m < cout; ++m) {
                        const T* row = gout.data() + (n * cout + m) * g.cols();
                        T acc = 0;
                        for (std::size_t p = 0; p < g.cols(); ++p) acc += row[p];
                        gb[m] += acc;
                    }
                }
                if (!gw.empty()) {
                    const T* colp = g.direct() ? xi.data.data() + n * in_stride
                                               : cols->data() + n * col_size;
                    MatMap<T>(gw.data(), M, K).noalias() += gmat * ConstMatMap<T>(colp, K, P).transpose();
                }
                if (!gx.empty()) {
                    if (g.direct()) {
                        MatMap<T>(gx.data() + n * in_stride, K, P).noalias() += wmat.transpose() * gmat;
                    } else {
                        MatMap<T>(scratch.data(), K, P).noalias() = wmat.transpose() * gmat;
                        col2im_add(scratch.data(), g, gx.data() + n * in_stride);
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
    const auto& x = impl_of(input, "relu");
    std::vector<T> out(x.data.size());
    std::transform(x.data.begin(), x.data.end(), out.begin(),
                   [](T v) { return v > T(0) ? v : T(0); });
    return record<T>(x.shape, std::move(out), "relu", {input.impl()},
                     [](detail::Node<T>& node, std::span<const T> gout) {
                         auto& xi = *node.inputs[0];
                         auto gx = xi.grad_buffer();
                         for (std::size_t i = 0; i < gx.size(); ++i)
                             if (xi.data[i] > T(0)) gx[i] += gout[i];
                     });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    const auto& ai = impl_of(a, "add");
    const auto& bi = impl_of(b, "add");
    if (ai.shape != bi.shape)
        shape_error("add", "shape mismatch " + ai.shape.str() + " vs " + bi.shape.str());
    std::vector<T> out(ai.data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ai.data[i] + bi.data[i];
    return record<T>(ai.shape, std::move(out), "add", {a.impl(), b.impl()},
                     [](detail::Node<T>& node, std::span<const T> gout) {
                         for (auto& in : node.inputs) {
                             if (!in->requires_grad) continue;
                             auto g = in->grad_buffer();
                             for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i];
                         }
                     });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    const auto& ai = impl_of(a, "scale");
    std::vector<T> out(ai.data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ai.data[i] * factor;
    return record<T>(ai.shape, std::move(out), "scale", {a.impl()},
                     [factor](detail::Node<T>& node, std::span<const T> gout) {
                         auto g = node.inputs[0]->grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i] * factor;
                     });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    const auto& ai = impl_of(a, "sum");
    T total = T(0);
    for (T v : ai.data) total += v;
    return record<T>(Shape{}, {total}, "sum", {a.impl()},
                     [](detail::Node<T>& node, std::span<const T> gout) {
                         auto g = node.inputs[0]->grad_buffer();
                         for (auto& v : g) v += gout[0];
                     });
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    const auto& ai = impl_of(a, "concat_channels");
    const auto& bi = impl_of(b, "concat_channels");
    const Shape& as = ai.shape;
    const Shape& bs = bi.shape;
    if (as.n != bs.n || as.h != bs.h || as.w != bs.w)
        shape_error("concat_channels", "N/H/W mismatch " + as.str() + " vs " + bs.str());
    const Shape out_shape{as.n, as.c + bs.c, as.h, as.w};
    std::vector<T> out(out_shape.numel());
    const std::size_t a_len = as.c * as.plane();
    const std::size_t b_len = bs.c * bs.plane();
    for (std::size_t n = 0; n < as.n; ++n) {
        T* dst = out.data() + n * (a_len + b_len);
        std::copy_n(ai.data.data() + n * a_len, a_len, dst);
        std::copy_n(bi.data.data() + n * b_len, b_len, dst + a_len);
    }
    return record<T>(out_shape, std::move(out), "concat_channels", {a.impl(), b.impl()},
                     [a_len, b_len](detail::Node<T>& node, std::span<const T> gout) {
                         auto& ain = *node.inputs[0];
                         auto& bin = *node.inputs[1];
                         const std::size_t batch = ain.shape.n;
                         for (std::size_t n = 0; n < batch; ++n) {
                             const T* src = gout.data() + n * (a_len + b_len);
                             if (ain.requires_grad) {
                                 T* ga = ain.grad_buffer().data() + n * a_len;
                                 for (std::size_t i = 0; i < a_len; ++i) ga[i] += src[i];
                             }
                             if (bin.requires_grad) {
                                 T* gb = bin.grad_buffer().data() + n * b_len;
                                 for (std::size_t i = 0; i < b_len; ++i) gb[i] += src[a_len + i];
                             }
                         }
                     });
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& a, std::size_t begin, std::size_t count) {
    const auto& ai = impl_of(a, "slice_channels");
    const Shape& s = ai.shape;
    if (count == 0 || begin + count > s.c)
        shape_error("slice_channels", "range [" + std::to_string(begin) + ", " +
                                          std::to_string(begin + count) + ") outside " +
                                          std::to_string(s.c) + " channels");
    const Shape out_shape{s.n, count, s.h, s.w};
    std::vector<T> out(out_shape.numel());
    const std::size_t plane = s.plane();
    for (std::size_t n = 0; n < s.n; ++n)
        std::copy_n(ai.data.data() + (n * s.c + begin) * plane, count * plane,
                    out.data() + n * count * plane);
    return record<T>(out_shape, std::move(out), "slice_channels", {a.impl()},
                     [begin, count](detail::Node<T>& node, std::span<const T> gout) {
                         auto& in = *node.inputs[0];
                         const Shape& s = in.shape;
                         const std::size_t plane = s.plane();
                         auto g = in.grad_buffer();
                         for (std::size_t n = 0; n < s.n; ++n) {
                             T* dst = g.data() + (n * s.c + begin) * plane;
                             const T* src = gout.data() + n * count * plane;
                             for (std::size_t i = 0; i < count * plane; ++i) dst[i] += src[i];
                         }
                     });
}

namespace {

// Index map shared by the four shuffle ops: for each element of the
// "expanded" layout (N, C, H*rh, W*rw), the offset of its source in the
// "packed" layout (N, C*rh*rw, H, W).
std::vector<std::size_t> shuffle_map(const Shape& packed, std::size_t rh, std::size_t rw) {
    const std::size_t c_out = packed.c / (rh * rw);
    const std::size_t ho = packed.h * rh;
    const std::size_t wo = packed.w * rw;
    std::vector<std::size_t> map(packed.numel());
    std::size_t o = 0;
    for (std::size_t n = 0; n < packed.n; ++n)
        for (std::size_t c = 0; c < c_out; ++c)
            for (std::size_t y = 0; y < ho; ++y)
                for (std::size_t x = 0; x < wo; ++x) {
                    const std::size_t i = y % rh, j = x % rw;
                    const std::size_t src_c = c * rh * rw + i * rw + j;
                    map[o++] = ((n * packed.c + src_c) * packed.h + y / rh) * packed.w + x / rw;
                }
    return map;
}

template <typename T>
Tensor<T> expand_op(const Tensor<T>& input, std::size_t rh, std::size_t rw, const char* op) {
    const auto& x = impl_of(input, op);
    const Shape& s = x.shape;
    if (rh == 0 || rw == 0) shape_error(op, "factor must be >= 1");
    if (s.c % (rh * rw) != 0)
        shape_error(op, "channels " + std::to_string(s.c) + " not divisible by " +
                            std::to_string(rh * rw));
    const Shape out_shape{s.n, s.c / (rh * rw), s.h * rh, s.w * rw};
    auto map = shuffle_map(s, rh, rw);
    std::vector<T> out(out_shape.numel());
    for (std::size_t o = 0; o < out.size(); ++o) out[o] = x.data[map[o]];
    return record<T>(out_shape, std::move(out), op, {input.impl()},
                     [map = std::move(map)](detail::Node<T>& node, std::span<const T> gout) {
                         auto g = node.inputs[0]->grad_buffer();
                         for (std::size_t o = 0; o < map.size(); ++o) g[map[o]] += gout[o];
                     });
}

template <typename T>
Tensor<T> pack_op(const Tensor<T>& input, std::size_t rh, std::size_t rw, const char* op) {
    const auto& x = impl_of(input, op);
    const Shape& s = x.shape;
    if (rh == 0 || rw == 0) shape_error(op, "factor must be >= 1");
    if (s.h % rh != 0 || s.w % rw != 0)
        shape_error(op, "spatial size " + s.str() + " not divisible by the factor");
    const Shape out_shape{s.n, s.c * rh * rw, s.h / rh, s.w / rw};
    auto map = shuffle_map(out_shape, rh, rw);
    std::vector<T> out(out_shape.numel());
    for (std::size_t o = 0; o < map.size(); ++o) out[map[o]] = x.data[o];
    return record<T>(out_shape, std::move(out), op, {input.impl()},
                     [map = std::move(map)](detail::Node<T>& node, std::span<const T> gout) {
                         auto g = node.inputs[0]->grad_buffer();
                         for (std::size_t o = 0; o < map.size(); ++o) g[o] += gout[map[o]];
                     });
}

}  // namespace

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& input, std::size_t r) {
    return expand_op(input, r, r, "pixel_shuffle");
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& input, std::size_t r) {
    return pack_op(input, r, r, "pixel_unshuffle");
}

template <typename T>
Tensor<T> vertical_pixel_shuffle(const Tensor<T>& input, std::size_t r) {
    return expand_op(input, r, std::size_t{1}, "vertical_pixel_shuffle");
}

template <typename T>
Tensor<T> vertical_pixel_unshuffle(const Tensor<T>& input, std::size_t r) {
    return pack_op(input, r, std::size_t{1}, "vertical_pixel_unshuffle");
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    const auto& p = impl_of(pred, "l1_loss");
    const auto& t = impl_of(target, "l1_loss");
    if (p.shape != t.shape)
        shape_error("l1_loss", "shape mismatch " + p.shape.str() + " vs " + t.shape.str());
    const auto count = static_cast<T>(p.data.size());
    T total = T(0);
    for (std::size_t i = 0; i < p.data.size(); ++i) total += std::abs(p.data[i] - t.data[i]);
    return record<T>(Shape{}, {total / count}, "l1_loss", {pred.impl(), target.impl()},
                     [count](detail::Node<T>& node, std::span<const T> gout) {
                         auto& pi = *node.inputs[0];
                         auto& ti = *node.inputs[1];
                         const T step = gout[0] / count;
                         auto sign = [](T d) { return T((d > T(0)) - (d < T(0))); };
                         if (pi.requires_grad) {
                             auto g = pi.grad_buffer();
                             for (std::size_t i = 0; i < g.size(); ++i)
                                 g[i] += step * sign(pi.data[i] - ti.data[i]);
                         }
                         if (ti.requires_grad) {
                             auto g = ti.grad_buffer();
                             for (std::size_t i = 0; i < g.size(); ++i)
                                 g[i] -= step * sign(pi.data[i] - ti.data[i]);
                         }
                     });
}

#define DIN_INSTANTIATE_OPS(T)                                                                 \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int);      \
    template Tensor<T> relu(const Tensor<T>&);                                                 \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                \
    template Tensor<T> scale(const Tensor<T>&, T);                                             \
    template Tensor<T> sum(const Tensor<T>&);                                                  \
    template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                    \
    template Tensor<T> slice_channels(const Tensor<T>&, std::size_t, std::size_t);             \
    template Tensor<T> pixel_shuffle(const Tensor<T>&, std::size_t);                           \
    template Tensor<T> pixel_unshuffle(const Tensor<T>&, std::size_t);                         \
    template Tensor<T> vertical_pixel_shuffle(const Tensor<T>&, std::size_t);                  \
    template Tensor<T> vertical_pixel_unshuffle(const Tensor<T>&, std::size_t);                \
    template Tensor<T> l1_loss(const Tensor<T>&, const Tensor<T>&);

DIN_INSTANTIATE_OPS(float)
DIN_INSTANTIATE_OPS(double)

}  // namespace din
