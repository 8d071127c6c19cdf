#include "din/image_io.hpp"
#include "din/metrics.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace din;
using din::test::random_frame;
using din::test::TempDir;

namespace {

Frame constant(int h, int w, int c, float v, PixelRange r = PixelRange::byte) {
    Frame f(h, w, c, r);
    std::fill(f.pixels().begin(), f.pixels().end(), v);
    return f;
}

Frame plus(const Frame& f, float delta) {
    Frame out = f;
    for (auto& v : out.pixels()) v += delta;
    return out;
}

// Direct 11x11 window sums for every valid position, no separability.
double reference_ssim(const Frame& a, const Frame& b) {
    double g[11][11], total = 0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
            total += g[i][j];
        }
    const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
    const double sa = 255.0 / a.max_value(), sb = 255.0 / b.max_value();
    double sum = 0;
    for (int c = 0; c < a.channels(); ++c) {
        double acc = 0;
        int count = 0;
        for (int y = 0; y + 11 <= a.height(); ++y)
            for (int x = 0; x + 11 <= a.width(); ++x) {
                double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
                for (int i = 0; i < 11; ++i)
                    for (int j = 0; j < 11; ++j) {
                        const double w = g[i][j] / total;
                        const double p = a.at(c, y + i, x + j) * sa, q = b.at(c, y + i, x + j) * sb;
                        mx += w * p;
                        my += w * q;
                        xx += w * p * p;
                        yy += w * q * q;
                        xy += w * p * q;
                    }
                acc += ((2 * mx * my + c1) * (2 * (xy - mx * my) + c2)) /
                       ((mx * mx + my * my + c1) * (xx - mx * mx + yy - my * my + c2));
                ++count;
            }
        sum += acc / count;
    }
    return sum / a.channels();
}

}  // namespace

TEST(Psnr, ClosedForms) {
    const Frame a = constant(16, 16, 3, 100);
    EXPECT_TRUE(std::isinf(psnr(a, a)));
    EXPECT_NEAR(psnr(constant(8, 8, 1, 0), constant(8, 8, 1, 255)), 0.0, 1e-12);
    EXPECT_NEAR(psnr(a, plus(a, 16)), 10 * std::log10(255.0 * 255.0 / 256.0), 1e-9);
    EXPECT_NEAR(psnr(a, plus(a, 16)), 24.0484, 1e-4);
    EXPECT_THROW(psnr(a, constant(16, 15, 3, 0)), std::invalid_argument);
}

TEST(Psnr, SymmetricScaleFreeAndMonotone) {
    const Frame a = random_frame(12, 12, 3, 1);
    const Frame b = random_frame(12, 12, 3, 2);
    EXPECT_EQ(psnr(a, b), psnr(b, a));
    EXPECT_NEAR(psnr(a.to_range(PixelRange::byte), b), psnr(a, b), 1e-6);
    const Frame base = constant(8, 8, 3, 128);
    double previous = std::numeric_limits<double>::infinity();
    for (float e = 1; e <= 64; e *= 2) {
        const double p = psnr(base, plus(base, e));
        EXPECT_LT(p, previous);
        previous = p;
    }
}

TEST(Ssim, IdentityIncludingConstantImages) {
    const Frame a = random_frame(20, 24, 3, 3);
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
    EXPECT_NEAR(ssim(constant(11, 11, 1, 0), constant(11, 11, 1, 0)), 1.0, 1e-12);
    EXPECT_NEAR(ssim(constant(16, 16, 3, 200), constant(16, 16, 3, 200)), 1.0, 1e-12);
}

TEST(Ssim, MatchesDirectWindowComputation) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const Frame a = random_frame(16, 19, 3, seed);
        const Frame b = random_frame(16, 19, 3, seed + 10);
        EXPECT_NEAR(ssim(a, b), reference_ssim(a, b), 1e-10);
        Frame noisy = a;
        std::mt19937_64 rng(seed);
        std::normal_distribution<float> n(0, 0.05f);
        for (auto& v : noisy.pixels()) v = std::clamp(v + n(rng), 0.0f, 1.0f);
        EXPECT_NEAR(ssim(a, noisy), reference_ssim(a, noisy), 1e-10);
        EXPECT_EQ(ssim(a, noisy), ssim(noisy, a));
    }
}

TEST(Ssim, InvertedImageIsAntiCorrelated) {
    Frame a(32, 32, 1, PixelRange::byte);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) a.at(0, y, x) = static_cast<float>(128 + 60 * std::sin(x * 0.7) * std::cos(y * 0.4));
    Frame inv = a;
    for (auto& v : inv.pixels()) v = 255 - v;
    EXPECT_LT(ssim(a, inv), 0.5);
    EXPECT_LT(ssim(a, inv), 0.0);
}

TEST(Ssim, ConstantImagesReduceToLuminanceTerm) {
    const double mu_a = 100, mu_b = 116;
    const double c1 = std::pow(0.01 * 255, 2);
    const double expected = (2 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1);
    EXPECT_NEAR(ssim(constant(16, 16, 3, 100), constant(16, 16, 3, 116)), expected, 1e-12);
}

TEST(Ssim, RejectsImagesSmallerThanWindow) {
    EXPECT_THROW(ssim(constant(10, 20, 1, 0), constant(10, 20, 1, 0)), std::invalid_argument);
    EXPECT_THROW(ssim(constant(20, 20, 1, 0), constant(20, 21, 1, 0)), std::invalid_argument);
}

TEST(Evaluate, RowsAggregatesAndCsv) {
    TempDir dir("eval");
    std::filesystem::create_directories(dir / "targets");
    std::filesystem::create_directories(dir / "outputs");
    const Frame t0 = random_frame(16, 16, 3, 1), t1 = random_frame(16, 16, 3, 2);
    write_image(dir / "targets" / "a.png", t0);
    write_image(dir / "targets" / "b.png", t1);
    write_image(dir / "outputs" / "a.png", random_frame(16, 16, 3, 3));
    write_image(dir / "outputs" / "b.png", t1);
    const auto report = evaluate(dir / "outputs", dir / "targets", "m");
    ASSERT_EQ(report.rows.size(), 2u);
    ASSERT_EQ(report.aggregates.size(), 1u);
    EXPECT_EQ(report.rows[0].image, "a.png");
    EXPECT_TRUE(std::isinf(report.rows[1].psnr_db));
    EXPECT_EQ(report.aggregates[0].image, "mean");
    EXPECT_EQ(report.aggregates[0].ssim, (report.rows[0].ssim + report.rows[1].ssim) / 2);
    const std::string csv = report.to_csv();
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    EXPECT_EQ(line, "image,method,psnr_db,ssim");
    std::size_t count = 0;
    while (std::getline(lines, line)) ++count;
    EXPECT_EQ(count, 3u);
    EXPECT_NE(csv.find("b.png,m,inf,1\n"), std::string::npos) << csv;
}

TEST(Evaluate, IdenticalDirectoriesGiveInfinityAndOne) {
    TempDir dir("same");
    std::filesystem::create_directories(dir / "t");
    for (int i = 0; i < 3; ++i) write_image(dir / "t" / (std::to_string(i) + ".png"), random_frame(12, 12, 3, static_cast<std::uint64_t>(i)));
    const auto report = evaluate(dir / "t", dir / "t", "same");
    EXPECT_TRUE(std::isinf(report.mean_for("same").psnr_db));
    EXPECT_EQ(report.mean_for("same").ssim, 1.0);
    EXPECT_EQ(format_metric(report.mean_for("same").psnr_db), "inf");
}

TEST(Evaluate, MeansAreArithmeticMeansOfRows) {
    MetricsReport r;
    r.rows = {{"a", "x", 10.0, 0.5}, {"b", "x", 20.0, 0.7}, {"c", "x", 33.0, 0.9}, {"a", "y", 1.0, 0.1}};
    r.aggregate();
    ASSERT_EQ(r.aggregates.size(), 2u);
    EXPECT_EQ(r.mean_for("x").psnr_db, (10.0 + 20.0 + 33.0) / 3);
    EXPECT_EQ(r.mean_for("x").ssim, (0.5 + 0.7 + 0.9) / 3);
    EXPECT_EQ(r.mean_for("y").psnr_db, 1.0);
}

TEST(Evaluate, MissingOutputsAreListed) {
    TempDir dir("missing");
    std::filesystem::create_directories(dir / "targets");
    std::filesystem::create_directories(dir / "outputs");
    for (const char* n : {"one.png", "two.png", "three.png"}) write_image(dir / "targets" / n, random_frame(12, 12, 1, 0));
    write_image(dir / "outputs" / "two.png", random_frame(12, 12, 1, 0));
    try {
        evaluate(dir / "outputs", dir / "targets", "m");
        FAIL() << "expected an error";
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("one.png"), std::string::npos);
        EXPECT_NE(msg.find("three.png"), std::string::npos);
        EXPECT_EQ(msg.find("two.png"), std::string::npos);
    }
}
