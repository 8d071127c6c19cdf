#include "din/toyset.hpp"

#include "din/image_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace fs = std::filesystem;

namespace din {

namespace {

struct Grating {
    double fx, fy, phase;
    std::array<double, 3> amplitude;
};

struct Sprite {
    bool disc;
    double cx, cy, rx, ry;   // centre and half extents at t = 0
    double vx, vy;           // pixels per frame
    std::array<double, 3> color;
    double stripe_freq, stripe_phase, stripe_amp;
};

struct Scene {
    std::array<double, 3> base;
    std::array<double, 3> ramp_x, ramp_y;
    std::vector<Grating> gratings;
    double bg_vx, bg_vy;
    std::vector<Sprite> sprites;
};

Scene random_scene(std::uint64_t seed, int size) {
    std::mt19937_64 rng(seed);
    auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    auto sign = [&] { return uni(0, 1) < 0.5 ? -1.0 : 1.0; };

    Scene s;
    for (int c = 0; c < 3; ++c) {
        s.base[c] = uni(0.3, 0.7);
        s.ramp_x[c] = uni(-0.15, 0.15);
        s.ramp_y[c] = uni(-0.15, 0.15);
    }
    const int gratings = 3;
    for (int i = 0; i < gratings; ++i) {
        const double period = uni(5.0, 18.0);
        const double angle = uni(0, std::numbers::pi);
        Grating g{std::cos(angle) / period, std::sin(angle) / period, uni(0, 2 * std::numbers::pi), {}};
        for (auto& a : g.amplitude) a = uni(0.02, 0.09);
        s.gratings.push_back(g);
    }
    s.bg_vx = sign() * uni(0.5, 3.0);
    s.bg_vy = sign() * uni(0.0, 2.0);

    const int sprites = 3 + static_cast<int>(rng() % 3);
    for (int i = 0; i < sprites; ++i) {
        Sprite sp{};
        sp.disc = rng() % 2 == 0;
        sp.cx = uni(0, size);
        sp.cy = uni(0, size);
        sp.rx = uni(size * 0.08, size * 0.22);
        sp.ry = uni(size * 0.08, size * 0.22);
        sp.vx = sign() * uni(1.0, 5.0);
        sp.vy = sign() * uni(0.0, 3.0);
        for (auto& c : sp.color) c = uni(0.05, 0.95);
        sp.stripe_freq = 1.0 / uni(4.0, 12.0);
        sp.stripe_phase = uni(0, 2 * std::numbers::pi);
        sp.stripe_amp = uni(0.0, 0.15);
        s.sprites.push_back(sp);
    }
    return s;
}

double smooth_edge(double signed_dist) {
    // 1-pixel anti-aliased coverage.
    return std::clamp(0.5 - signed_dist, 0.0, 1.0);
}

Frame render(const Scene& s, int size, double t) {
    Frame f(size, size, 3, PixelRange::unit);
    const double two_pi = 2 * std::numbers::pi;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double bx = x - s.bg_vx * t;
            const double by = y - s.bg_vy * t;
            std::array<double, 3> px{};
            for (int c = 0; c < 3; ++c) {
                px[c] = s.base[c] + s.ramp_x[c] * (bx / size - 0.5) + s.ramp_y[c] * (by / size - 0.5);
                for (const auto& g : s.gratings)
                    px[c] += g.amplitude[c] * std::sin(two_pi * (g.fx * bx + g.fy * by) + g.phase);
            }
            for (const auto& sp : s.sprites) {
                const double dx = x - (sp.cx + sp.vx * t);
                const double dy = y - (sp.cy + sp.vy * t);
                double dist;
                if (sp.disc) {
                    const double r = std::hypot(dx / sp.rx, dy / sp.ry);
                    dist = (r - 1.0) * std::min(sp.rx, sp.ry);
                } else {
                    dist = std::max(std::abs(dx) - sp.rx, std::abs(dy) - sp.ry);
                }
                const double cover = smooth_edge(dist);
                if (cover <= 0) continue;
                const double stripe = sp.stripe_amp * std::sin(two_pi * sp.stripe_freq * (dx + dy) + sp.stripe_phase);
                for (int c = 0; c < 3; ++c) px[c] = px[c] * (1 - cover) + (sp.color[c] + stripe) * cover;
            }
            for (int c = 0; c < 3; ++c) f.at(c, y, x) = static_cast<float>(std::clamp(px[c], 0.0, 1.0));
        }
    return f;
}

}  // namespace

std::pair<Frame, Frame> make_moving_texture_pair(std::uint64_t seed, int size) {
    const Scene scene = random_scene(seed, size);
    return {render(scene, size, 0.0), render(scene, size, 1.0)};
}

std::vector<fs::path> write_toy_sequence(const fs::path& dir, int pairs, int size, std::uint64_t seed) {
    fs::create_directories(dir);
    std::mt19937_64 seeds(seed);
    std::vector<fs::path> written;
    for (int i = 0; i < pairs; ++i) {
        const auto [first, second] = make_moving_texture_pair(seeds(), size);
        for (const Frame* f : {&first, &second}) {
            char name[32];
            std::snprintf(name, sizeof(name), "seq_%04zu.png", written.size());
            written.push_back(dir / name);
            write_image(written.back(), *f);
        }
    }
    return written;
}

}  // namespace din
