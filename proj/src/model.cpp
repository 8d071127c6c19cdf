#include "din/model.hpp"

#include "din/interlace.hpp"
#include "din/ops.hpp"
#include "din/optim.hpp"

#include <random>
#include <stdexcept>

namespace din {

void DinConfig::validate() const {
    auto positive = [](int v, const char* name) {
        if (v < 1) throw std::invalid_argument(std::string("DinConfig.") + name + " must be >= 1");
    };
    positive(base_channels, "base_channels");
    positive(cis_blocks, "cis_blocks");
    positive(fms_base_blocks_pre, "fms_base_blocks_pre");
    positive(fms_base_blocks_post, "fms_base_blocks_post");
    positive(fms_down_blocks, "fms_down_blocks");
    positive(in_channels, "in_channels");
    positive(out_channels, "out_channels");
    if (base_channels % 2 != 0) throw std::invalid_argument("DinConfig.base_channels must be even");
}

namespace {

struct LayerSpec {
    std::string name;
    std::size_t cout, cin, k;
    int stride;
};

std::vector<LayerSpec> topology(const DinConfig& cfg) {
    cfg.validate();
    const auto c = static_cast<std::size_t>(cfg.base_channels);
    const auto in = static_cast<std::size_t>(cfg.in_channels);
    const auto out = static_cast<std::size_t>(cfg.out_channels);
    std::vector<LayerSpec> specs;
    auto blocks = [&](const std::string& prefix, int count, std::size_t width) {
        for (int i = 0; i < count; ++i) {
            const std::string base = prefix + std::to_string(i);
            specs.push_back({base + ".conv1", width, width, 3, 1});
            specs.push_back({base + ".conv2", width, width, 3, 1});
        }
    };
    specs.push_back({"cis.head", c, 2 * in, 3, 1});
    blocks("cis.rb", cfg.cis_blocks, c);
    specs.push_back({"cis.expand", 2 * c, c, 3, 1});
    specs.push_back({"cis.inter", out, c, 1, 1});
    blocks("fms.pre", cfg.fms_base_blocks_pre, c);
    specs.push_back({"fms.down", c, c, 3, 2});
    blocks("fms.down_rb", cfg.fms_down_blocks, c);
    specs.push_back({"fms.down_expand", 4 * c, c, 3, 1});
    blocks("fms.post", cfg.fms_base_blocks_post, 2 * c);
    specs.push_back({"fms.out", out, 2 * c, 3, 1});
    return specs;
}

template <typename T>
Tensor<T> apply(const ConvLayer<T>& layer, const Tensor<T>& x) {
    return conv2d(x, layer.weight, layer.bias, layer.stride);
}

template <typename T>
Tensor<T> residual_block(const DinParams<T>& p, const std::string& prefix, const Tensor<T>& x) {
    const auto h = relu(apply(p.layer(prefix + ".conv1"), x));
    return add(x, apply(p.layer(prefix + ".conv2"), h));
}

template <typename T>
Tensor<T> residual_stack(const DinParams<T>& p, const std::string& prefix, int count, Tensor<T> x) {
    for (int i = 0; i < count; ++i) x = residual_block(p, prefix + std::to_string(i), x);
    return x;
}

}  // namespace

template <typename T>
const ConvLayer<T>& DinParams<T>::layer(std::string_view name) const {
    for (const auto& l : layers)
        if (l.name == name) return l;
    throw std::out_of_range("no layer named " + std::string(name));
}

template <typename T>
std::vector<Tensor<T>> DinParams<T>::tensors() const {
    std::vector<Tensor<T>> out;
    out.reserve(layers.size() * 2);
    for (const auto& l : layers) {
        out.push_back(l.weight);
        out.push_back(l.bias);
    }
    return out;
}

template <typename T>
void DinParams<T>::zero_grad() {
    for (auto& l : layers) {
        l.weight.zero_grad();
        l.bias.zero_grad();
    }
}

template <typename T>
DinParams<T> build(const DinConfig& cfg, std::uint64_t seed) {
    DinParams<T> params;
    params.config = cfg;
    std::mt19937_64 seeds(seed);
    for (const auto& spec : topology(cfg)) {
        ConvLayer<T> layer;
        layer.name = spec.name;
        layer.stride = spec.stride;
        layer.weight = xavier_init<T>(Shape{spec.cout, spec.cin, spec.k, spec.k}, seeds());
        layer.bias = Tensor<T>(Shape{spec.cout, 1, 1, 1}, true);
        params.layers.push_back(std::move(layer));
    }
    return params;
}

template <typename T>
std::size_t param_count(const DinParams<T>& params) {
    std::size_t total = 0;
    for (const auto& l : params.layers) total += l.weight.numel() + l.bias.numel();
    return total;
}

std::size_t param_count(const DinConfig& cfg) {
    std::size_t total = 0;
    for (const auto& s : topology(cfg)) total += s.cout * s.cin * s.k * s.k + s.cout;
    return total;
}

template <typename To, typename From>
DinParams<To> convert_params(const DinParams<From>& params) {
    DinParams<To> out;
    out.config = params.config;
    for (const auto& l : params.layers) {
        auto cast = [](const Tensor<From>& t) {
            std::vector<To> values(t.data().begin(), t.data().end());
            return Tensor<To>(t.shape(), std::move(values), t.requires_grad());
        };
        out.layers.push_back({l.name, cast(l.weight), cast(l.bias), l.stride});
    }
    return out;
}

template <typename T>
CisOutput<T> cis_forward(const DinParams<T>& p, const Tensor<T>& odd_field,
                         const Tensor<T>& even_field) {
    if (odd_field.shape() != even_field.shape())
        throw std::invalid_argument("cis_forward: field shapes differ, " + odd_field.shape().str() +
                                    " vs " + even_field.shape().str());
    if (odd_field.shape().c != static_cast<std::size_t>(p.config.in_channels))
        throw std::invalid_argument("cis_forward: expected " + std::to_string(p.config.in_channels) +
                                    " channels per field, got " +
                                    std::to_string(odd_field.shape().c));
    const auto head = apply(p.layer("cis.head"), concat_channels(odd_field, even_field));
    auto body = residual_stack(p, "cis.rb", p.config.cis_blocks, head);
    body = add(body, head);
    auto features = vertical_pixel_shuffle(apply(p.layer("cis.expand"), body), 2);
    auto intermediate = apply(p.layer("cis.inter"), features);
    return {std::move(features), std::move(intermediate)};
}

template <typename T>
Tensor<T> fms_forward(const DinParams<T>& p, const Tensor<T>& features,
                      const Tensor<T>& intermediate) {
    const Shape& fs = features.shape();
    const Shape& is = intermediate.shape();
    if (fs.c != static_cast<std::size_t>(p.config.base_channels))
        throw std::invalid_argument("fms_forward: expected " + std::to_string(p.config.base_channels) +
                                    " feature channels, got " + std::to_string(fs.c));
    if (fs.n != is.n || fs.h != is.h || fs.w != is.w)
        throw std::invalid_argument("fms_forward: features " + fs.str() +
                                    " and intermediate " + is.str() + " disagree");
    if (fs.h % 2 != 0 || fs.w % 2 != 0)
        throw std::invalid_argument("fms_forward: height and width must be even, got " + fs.str());

    const auto base = residual_stack(p, "fms.pre", p.config.fms_base_blocks_pre, features);

    auto down = apply(p.layer("fms.down"), features);
    down = residual_stack(p, "fms.down_rb", p.config.fms_down_blocks, down);
    const auto up = pixel_shuffle(apply(p.layer("fms.down_expand"), down), 2);

    auto merged = residual_stack(p, "fms.post", p.config.fms_base_blocks_post,
                                 concat_channels(base, up));
    merged = add(merged, concat_channels(features, up));
    return add(apply(p.layer("fms.out"), merged), intermediate);
}

template <typename T>
DinOutput<T> forward(const DinParams<T>& params, const Tensor<T>& odd_field,
                     const Tensor<T>& even_field) {
    auto cis = cis_forward(params, odd_field, even_field);
    auto final = fms_forward(params, cis.features, cis.intermediate);
    return {std::move(final), std::move(cis.intermediate)};
}

namespace {

// Reflect-pads one trailing row and/or column.
Frame pad_to_even(const Frame& f) {
    const int h = f.height() + f.height() % 2;
    const int w = f.width() + f.width() % 2;
    if (h == f.height() && w == f.width()) return f;
    Frame out(h, w, f.channels(), f.range());
    for (int c = 0; c < f.channels(); ++c)
        for (int y = 0; y < h; ++y) {
            const int sy = y < f.height() ? y : std::max(f.height() - 2, 0);
            for (int x = 0; x < w; ++x) {
                const int sx = x < f.width() ? x : std::max(f.width() - 2, 0);
                out.at(c, y, x) = f.at(c, sy, sx);
            }
        }
    return out;
}

}  // namespace

Frame deinterlace_din(const DinParams<float>& params, const Frame& interlaced) {
    if (interlaced.channels() != params.config.in_channels)
        throw std::invalid_argument("deinterlace_din: network expects " +
                                    std::to_string(params.config.in_channels) +
                                    " channels, frame has " + std::to_string(interlaced.channels()));
    // Inference copy without gradient tracking, so no graph is recorded.
    auto inference = convert_params<float>(params);
    for (auto& l : inference.layers) {
        l.weight.set_requires_grad(false);
        l.bias.set_requires_grad(false);
    }
    const Frame padded = pad_to_even(interlaced.to_range(PixelRange::unit));
    const FieldPair fields = split_fields(padded);
    const auto out = forward(inference, frame_to_tensor<float>(fields.odd_field),
                             frame_to_tensor<float>(fields.even_field));
    Frame result = tensor_to_frame(out.final).crop(0, 0, interlaced.height(), interlaced.width());
    return result.clamped().to_range(interlaced.range());
}

template struct DinParams<float>;
template struct DinParams<double>;
template DinParams<float> build(const DinConfig&, std::uint64_t);
template DinParams<double> build(const DinConfig&, std::uint64_t);
template std::size_t param_count(const DinParams<float>&);
template std::size_t param_count(const DinParams<double>&);
template DinParams<float> convert_params(const DinParams<float>&);
template DinParams<double> convert_params(const DinParams<float>&);
template DinParams<float> convert_params(const DinParams<double>&);
template DinParams<double> convert_params(const DinParams<double>&);
template CisOutput<float> cis_forward(const DinParams<float>&, const Tensor<float>&, const Tensor<float>&);
template CisOutput<double> cis_forward(const DinParams<double>&, const Tensor<double>&,
                                       const Tensor<double>&);
template Tensor<float> fms_forward(const DinParams<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> fms_forward(const DinParams<double>&, const Tensor<double>&,
                                    const Tensor<double>&);
template DinOutput<float> forward(const DinParams<float>&, const Tensor<float>&, const Tensor<float>&);
template DinOutput<double> forward(const DinParams<double>&, const Tensor<double>&,
                                   const Tensor<double>&);

}  // namespace din
