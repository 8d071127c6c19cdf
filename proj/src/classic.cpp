#include "din/classic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace din {

namespace {

void require_even(const Frame& f, const char* who) {
    if (f.empty()) throw std::invalid_argument(std::string(who) + ": empty frame");
    if (f.height() % 2 != 0)
        throw std::invalid_argument(std::string(who) + ": frame height must be even");
}

}  // namespace

Frame weave(const Frame& interlaced) {
    require_even(interlaced, "weave");
    return interlaced;
}

Frame bob_line_average(const Frame& interlaced) {
    require_even(interlaced, "bob_line_average");
    Frame out = interlaced;
    const int h = out.height(), w = out.width();
    for (int c = 0; c < out.channels(); ++c)
        for (int y = 1; y < h; y += 2) {
            const float* above = interlaced.row(c, y - 1);
            float* dst = out.row(c, y);
            if (y + 1 >= h) {
                std::copy_n(above, w, dst);
                continue;
            }
            const float* below = interlaced.row(c, y + 1);
            for (int x = 0; x < w; ++x) dst[x] = (above[x] + below[x]) * 0.5f;
        }
    return out;
}

Frame ela(const Frame& interlaced) {
    require_even(interlaced, "ela");
    Frame out = bob_line_average(interlaced);
    const int h = out.height(), w = out.width(), channels = out.channels();
    for (int y = 1; y + 1 < h; y += 2) {
        for (int x = 1; x + 1 < w; ++x) {
            // Direction offsets: -1 pairs a[x-1] with b[x+1], +1 pairs a[x+1] with b[x-1].
            float diff_left = 0, diff_vert = 0, diff_right = 0;
            for (int c = 0; c < channels; ++c) {
                const float* a = interlaced.row(c, y - 1);
                const float* b = interlaced.row(c, y + 1);
                diff_left += std::abs(a[x - 1] - b[x + 1]);
                diff_vert += std::abs(a[x] - b[x]);
                diff_right += std::abs(a[x + 1] - b[x - 1]);
            }
            int dir = 0;
            if (diff_left < diff_vert && diff_left <= diff_right) dir = -1;
            else if (diff_right < diff_vert && diff_right < diff_left) dir = 1;
            if (dir == 0) continue;  // already the vertical average
            for (int c = 0; c < channels; ++c) {
                const float* a = interlaced.row(c, y - 1);
                const float* b = interlaced.row(c, y + 1);
                out.at(c, y, x) = (a[x + dir] + b[x - dir]) * 0.5f;
            }
        }
    }
    return out;
}

Frame temporal_insert(const Frame& interlaced) {
    require_even(interlaced, "temporal_insert");
    Frame out(interlaced.height(), interlaced.width(), interlaced.channels(), interlaced.range());
    for (int c = 0; c < out.channels(); ++c)
        for (int y = 0; y < out.height(); ++y)
            std::copy_n(interlaced.row(c, y), out.width(), out.row(c, y));
    return out;
}

Frame motion_adaptive(const Frame& interlaced, double threshold) {
    require_even(interlaced, "motion_adaptive");
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw std::invalid_argument("motion_adaptive: threshold must be in [0, 1]");
    const Frame temporal = temporal_insert(interlaced);
    Frame out = bob_line_average(interlaced);
    const float limit = static_cast<float>(threshold) * interlaced.max_value();
    for (int y = 1; y < out.height(); y += 2)
        for (int x = 0; x < out.width(); ++x) {
            float motion = 0;
            for (int c = 0; c < out.channels(); ++c)
                motion = std::max(motion, std::abs(temporal.at(c, y, x) - out.at(c, y, x)));
            if (motion <= limit)
                for (int c = 0; c < out.channels(); ++c) out.at(c, y, x) = temporal.at(c, y, x);
        }
    return out;
}

}  // namespace din
