#include "din/checkpoint.hpp"
#include "din/interlace.hpp"
#include "din/trainer.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

using namespace din;
using din::test::random_frame;
using din::test::random_tensor;
using din::test::TempDir;

namespace {

TrainConfig quick(int epochs = 1, int steps = 4) {
    TrainConfig c;
    c.patch_size = 8;
    c.batch_size = 2;
    c.epochs = epochs;
    c.steps_per_epoch = steps;
    c.lr0 = 1e-3;
    c.seed = 11;
    return c;
}

DinConfig tiny() {
    DinConfig c;
    c.base_channels = 4;
    c.cis_blocks = 1;
    c.fms_base_blocks_pre = 1;
    c.fms_base_blocks_post = 1;
    c.fms_down_blocks = 1;
    return c;
}

// Smooth moving pattern so that a small network has something learnable.
std::vector<TrainPair> toy_pairs(int count, int size, std::uint64_t seed) {
    std::vector<TrainPair> pairs;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < count; ++i) {
        const double fx = 0.2 + 0.5 * u(rng), fy = 0.2 + 0.5 * u(rng), phase = 6.28 * u(rng), shift = 2 * u(rng);
        auto make = [&](double t) {
            Frame f(size, size, 3);
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < size; ++y)
                    for (int x = 0; x < size; ++x)
                        f.at(c, y, x) = static_cast<float>(0.5 + 0.4 * std::sin(fx * (x + shift * t) + fy * y + phase + c));
            return f;
        };
        const Frame first = make(0), second = make(1);
        pairs.push_back({scan_interlaced(first, second), first});
    }
    return pairs;
}

double moving_average(const std::vector<StepRecord>& steps, std::size_t centre, std::size_t half) {
    double sum = 0;
    for (std::size_t i = centre - half; i <= centre + half; ++i) sum += steps[i].loss_total;
    return sum / static_cast<double>(2 * half + 1);
}

}  // namespace

TEST(Schedules, LambdaHoldsThenDecaysLinearly) {
    TrainConfig c;
    EXPECT_DOUBLE_EQ(lambda_schedule(0, 100, c), 0.5);
    EXPECT_DOUBLE_EQ(lambda_schedule(49, 100, c), 0.5);
    EXPECT_DOUBLE_EQ(lambda_schedule(99, 100, c), 0.1);
    EXPECT_NEAR(lambda_schedule(74, 100, c), 0.3, 1e-12);
    double previous = 1;
    for (int e = 0; e < 100; ++e) {
        const double l = lambda_schedule(e, 100, c);
        EXPECT_LE(l, previous);
        EXPECT_GE(l, 0.1 - 1e-15);
        previous = l;
    }
    EXPECT_DOUBLE_EQ(lambda_schedule(0, 1, c), 0.1);
    EXPECT_THROW(lambda_schedule(100, 100, c), std::out_of_range);
}

TEST(Schedules, LearningRateStepDecay) {
    TrainConfig c;
    EXPECT_DOUBLE_EQ(lr_schedule(0, c), 1e-4);
    EXPECT_DOUBLE_EQ(lr_schedule(19, c), 1e-4);
    EXPECT_DOUBLE_EQ(lr_schedule(20, c), 1e-5);
    EXPECT_DOUBLE_EQ(lr_schedule(45, c), 1e-6);
    EXPECT_THROW(lr_schedule(-1, c), std::out_of_range);
}

TEST(Config, Validation) {
    EXPECT_NO_THROW(TrainConfig{}.validate());
    TrainConfig c;
    c.patch_size = 7;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.lambda_end = 0.7;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.lr0 = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(TotalLoss, ClosedForms) {
    const auto t = random_tensor<double>(Shape{1, 3, 4, 4}, 1);
    const auto zero = total_loss(t, t, t, 0.3);
    EXPECT_EQ(zero.total.item(), 0.0);

    std::vector<double> two(48, 2.0), four(48, 4.0);
    const Tensor<double> target(Shape{1, 3, 4, 4});
    const Tensor<double> inter(Shape{1, 3, 4, 4}, two), fin(Shape{1, 3, 4, 4}, four);
    const auto half = total_loss(inter, fin, target, 0.5);
    EXPECT_DOUBLE_EQ(half.total.item(), 3.0);
    EXPECT_DOUBLE_EQ(half.intermediate, 2.0);
    EXPECT_DOUBLE_EQ(half.final, 4.0);
    EXPECT_DOUBLE_EQ(total_loss(inter, fin, target, 1.0).total.item(), 2.0);
    EXPECT_DOUBLE_EQ(total_loss(inter, fin, target, 0.0).total.item(), 4.0);
}

TEST(TotalLoss, GradientSplitsByLambda) {
    auto inter = random_tensor<double>(Shape{1, 1, 2, 2}, 2, 1, 2, true);
    auto fin = random_tensor<double>(Shape{1, 1, 2, 2}, 3, 1, 2, true);
    const Tensor<double> target(Shape{1, 1, 2, 2});
    total_loss(inter, fin, target, 0.25).total.backward();
    for (double g : inter.grad()) EXPECT_DOUBLE_EQ(g, 0.25 / 4);
    for (double g : fin.grad()) EXPECT_DOUBLE_EQ(g, 0.75 / 4);
}

TEST(Sampler, ShapesAndFieldParity) {
    const auto pairs = toy_pairs(3, 20, 1);
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto batch = sample_patches(pairs, 8, 4, rng);
        ASSERT_EQ(batch.size(), 4u);
        for (const auto& s : batch) {
            EXPECT_EQ(s.target.height(), 8);
            EXPECT_EQ(s.target.width(), 8);
            EXPECT_EQ(s.input_fields.odd_field.height(), 4);
            EXPECT_EQ(s.input_fields.even_field.width(), 8);
            // Target and input must come from the same even-row crop of one pair.
            bool found = false;
            for (const auto& p : pairs)
                for (int y = 0; y + 8 <= 20 && !found; y += 2)
                    for (int x = 0; x + 8 <= 20 && !found; ++x) {
                        bool match = true;
                        for (int yy = 0; yy < 8 && match; ++yy)
                            for (int xx = 0; xx < 8 && match; ++xx)
                                match = s.target.at(0, yy, xx) == p.target.at(0, y + yy, x + xx) &&
                                        merge_fields(s.input_fields).at(1, yy, xx) == p.input.at(1, y + yy, x + xx);
                        found = match;
                    }
            EXPECT_TRUE(found) << "patch is not an even-row crop of any pair";
        }
    }
}

TEST(Sampler, SkipsSmallImagesAndRejectsWhenNoneFit) {
    auto pairs = toy_pairs(1, 6, 2);
    std::mt19937_64 rng(1);
    EXPECT_THROW(sample_patches(pairs, 8, 1, rng), std::runtime_error);
    auto big = toy_pairs(1, 16, 3);
    pairs.push_back(big[0]);
    for (const auto& s : sample_patches(pairs, 8, 6, rng)) EXPECT_EQ(s.target.width(), 8);
}

TEST(Flips, InvolutionsAndFieldSwap) {
    const auto pairs = toy_pairs(1, 16, 4);
    std::mt19937_64 rng(3);
    const auto s = sample_patches(pairs, 8, 1, rng)[0];
    const auto h2 = hflip(hflip(s));
    EXPECT_EQ(h2.target, s.target);
    EXPECT_EQ(h2.input_fields.odd_field, s.input_fields.odd_field);
    const auto v2 = vflip(vflip(s));
    EXPECT_EQ(v2.target, s.target);
    EXPECT_EQ(v2.input_fields.even_field, s.input_fields.even_field);

    const auto v = vflip(s);
    EXPECT_EQ(v.target, s.target.flipped_vertical());
    EXPECT_EQ(merge_fields(v.input_fields), merge_fields(s.input_fields).flipped_vertical());
    // With an even height, the old bottom field becomes the new top field (reversed).
    EXPECT_EQ(v.input_fields.odd_field, s.input_fields.even_field.flipped_vertical());
    EXPECT_EQ(hflip(s).target, s.target.flipped_horizontal());
}

TEST(Flips, DisabledAugmentationIsIdentity) {
    const auto pairs = toy_pairs(1, 16, 4);
    std::mt19937_64 rng(3);
    const auto s = sample_patches(pairs, 8, 1, rng)[0];
    TrainConfig off;
    off.hflip = false;
    off.vflip = false;
    for (int i = 0; i < 10; ++i) EXPECT_EQ(augment_flip(s, rng, off).target, s.target);
    TrainConfig on;
    int changed = 0;
    for (int i = 0; i < 40; ++i) changed += augment_flip(s, rng, on).target == s.target ? 0 : 1;
    EXPECT_GT(changed, 20);
    EXPECT_LT(changed, 40);
}

TEST(ChannelShuffle, PermutesPlanesOfFieldsAndTarget) {
    const auto pairs = toy_pairs(1, 16, 4);
    std::mt19937_64 rng(3);
    const auto s = sample_patches(pairs, 8, 1, rng)[0];
    const std::vector<int> order{2, 0, 1}, inverse{1, 2, 0};
    const auto p = permute_channels(s, order);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) {
                EXPECT_EQ(p.target.at(c, y, x), s.target.at(order[c], y, x));
                if (y < 4) {
                    EXPECT_EQ(p.input_fields.even_field.at(c, y, x), s.input_fields.even_field.at(order[c], y, x));
                }
            }
    const auto back = permute_channels(p, inverse);
    EXPECT_EQ(back.target, s.target);
    EXPECT_EQ(back.input_fields.odd_field, s.input_fields.odd_field);
    EXPECT_EQ(back.input_fields.even_field, s.input_fields.even_field);
    EXPECT_THROW(permute_channels(s, std::vector<int>{0, 1}), std::invalid_argument);
}

TEST(ChannelShuffle, DrawsEveryPermutation) {
    const auto pairs = toy_pairs(1, 16, 4);
    std::mt19937_64 rng(3);
    const auto s = sample_patches(pairs, 8, 1, rng)[0];
    TrainConfig cfg;
    cfg.hflip = false;
    cfg.vflip = false;
    cfg.channel_shuffle = true;
    std::set<std::vector<int>> seen;
    for (int i = 0; i < 200; ++i) {
        const auto out = augment_flip(s, rng, cfg);
        // Channel planes of the toy patch are distinct, so each output plane names its source.
        std::vector<int> order;
        for (int c = 0; c < 3; ++c)
            for (int src = 0; src < 3; ++src)
                if (std::equal(s.target.pixels().begin() + src * 64, s.target.pixels().begin() + (src + 1) * 64,
                               out.target.pixels().begin() + c * 64))
                    order.push_back(src);
        ASSERT_EQ(order.size(), 3u);
        const auto expect = permute_channels(s, order);
        EXPECT_EQ(expect.target, out.target);
        EXPECT_EQ(expect.input_fields.odd_field, out.input_fields.odd_field);
        EXPECT_EQ(expect.input_fields.even_field, out.input_fields.even_field);
        seen.insert(order);
    }
    EXPECT_EQ(seen.size(), 6u);
}

TEST(StepsPerEpoch, DerivedFromDataset) {
    auto pairs = toy_pairs(3, 16, 1);
    TrainConfig c;
    c.patch_size = 8;
    c.batch_size = 5;
    EXPECT_EQ(steps_per_epoch(pairs, c), 3);  // 3 * 4 patches in batches of 5
    c.max_steps_per_epoch = 2;
    EXPECT_EQ(steps_per_epoch(pairs, c), 2);
    c.steps_per_epoch = 7;
    c.max_steps_per_epoch = 0;
    EXPECT_EQ(steps_per_epoch(pairs, c), 7);
}

TEST(Train, LossFallsOnToyData) {
    const auto pairs = toy_pairs(8, 32, 7);
    auto cfg = quick(1, 60);
    cfg.patch_size = 16;
    cfg.batch_size = 4;
    const auto result = train(pairs, tiny(), cfg);
    ASSERT_EQ(result.log.steps.size(), 60u);
    const double early = moving_average(result.log.steps, 5, 5);
    const double late = moving_average(result.log.steps, 54, 5);
    EXPECT_LT(late, 0.6 * early) << early << " -> " << late;
}

TEST(Train, DeterministicInSeed) {
    const auto pairs = toy_pairs(4, 16, 8);
    const auto a = train(pairs, tiny(), quick(2, 3));
    const auto b = train(pairs, tiny(), quick(2, 3));
    ASSERT_EQ(a.log.steps.size(), 6u);
    for (std::size_t i = 0; i < a.log.steps.size(); ++i) EXPECT_EQ(a.log.steps[i].loss_total, b.log.steps[i].loss_total);
    auto other = quick(2, 3);
    other.seed = 12;
    EXPECT_NE(train(pairs, tiny(), other).log.steps[0].loss_total, a.log.steps[0].loss_total);
}

TEST(Train, LogRecordsSchedules) {
    const auto pairs = toy_pairs(4, 16, 9);
    auto cfg = quick(6, 2);
    cfg.lr_decay_every = 2;
    const auto result = train(pairs, tiny(), cfg);
    ASSERT_EQ(result.log.epochs.size(), 6u);
    for (const auto& e : result.log.epochs) {
        EXPECT_EQ(e.lambda, lambda_schedule(e.epoch, 6, cfg));
        EXPECT_EQ(e.lr, lr_schedule(e.epoch, cfg));
        const double mean = (result.log.steps[static_cast<std::size_t>(2 * e.epoch)].loss_total +
                             result.log.steps[static_cast<std::size_t>(2 * e.epoch + 1)].loss_total) / 2;
        EXPECT_DOUBLE_EQ(e.loss_total, mean);
    }
    for (std::size_t i = 0; i < result.log.steps.size(); ++i)
        EXPECT_EQ(result.log.steps[i].step, static_cast<std::int64_t>(i + 1));
}

TEST(Train, CheckpointsCsvAndResume) {
    TempDir dir("train");
    const auto pairs = toy_pairs(4, 16, 10);
    const auto cfg = quick(3, 3);
    TrainOptions opts;
    opts.out_dir = dir / "run";
    const auto full = train(pairs, tiny(), cfg, opts);
    for (const char* f : {"epoch_0000.din", "epoch_0001.din", "epoch_0002.din", "final.din", "train_log.csv",
                          "epoch_0000.din.state"})
        EXPECT_TRUE(std::filesystem::exists(opts.out_dir / f)) << f;

    const auto log = TrainLog::read_csv(opts.out_dir / "train_log.csv");
    ASSERT_EQ(log.epochs.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(log.epochs[i].loss_total, full.log.epochs[i].loss_total);
        EXPECT_EQ(log.epochs[i].lr, full.log.epochs[i].lr);
    }

    TrainOptions resume;
    resume.resume_from = opts.out_dir / "epoch_0000.din";
    const auto rest = train(pairs, tiny(), cfg, resume);
    ASSERT_EQ(rest.log.steps.size(), 6u);
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_EQ(rest.log.steps[i].loss_total, full.log.steps[i + 3].loss_total) << i;
        EXPECT_EQ(rest.log.steps[i].step, full.log.steps[i + 3].step);
    }
    const auto final_params = load_checkpoint(opts.out_dir / "final.din");
    for (std::size_t i = 0; i < final_params.layers.size(); ++i)
        EXPECT_TRUE(std::equal(final_params.layers[i].weight.data().begin(), final_params.layers[i].weight.data().end(),
                               rest.params.layers[i].weight.data().begin()));

    DinConfig other = tiny();
    other.base_channels = 6;
    EXPECT_THROW(train(pairs, other, cfg, resume), std::invalid_argument);
}

TEST(Train, NonFiniteLossStops) {
    auto pairs = toy_pairs(2, 16, 11);
    for (auto& p : pairs) std::fill(p.target.pixels().begin(), p.target.pixels().end(), std::nanf(""));
    try {
        train(pairs, tiny(), quick());
        FAIL() << "expected an error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("non-finite loss at epoch 0, step 0"), std::string::npos) << e.what();
    }
}

TEST(TrainLog, CsvRoundTripIsExact) {
    TrainLog log;
    log.epochs = {{0, 0.1, 1.0 / 3, 2.0 / 7, 0.5, 1e-4}, {1, 1e-300, 0.2, 0.3, 0.1, 1e-5}};
    TempDir dir("log");
    log.write_csv(dir / "l.csv");
    const auto back = TrainLog::read_csv(dir / "l.csv");
    ASSERT_EQ(back.epochs.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(back.epochs[i].epoch, log.epochs[i].epoch);
        EXPECT_EQ(back.epochs[i].loss_inter, log.epochs[i].loss_inter);
        EXPECT_EQ(back.epochs[i].loss_total, log.epochs[i].loss_total);
        EXPECT_EQ(back.epochs[i].lr, log.epochs[i].lr);
    }
    EXPECT_EQ(log.to_csv().substr(0, log.to_csv().find('\n')), "epoch,loss_total,loss_inter,loss_final,lambda,lr");
}

TEST(TrainState, RoundTrip) {
    TrainState s;
    s.epoch = 4;
    s.adam.step = 17;
    s.adam.m = {std::vector<float>{1.5f, -2.0f}, std::vector<float>{3e-8f}};
    s.adam.v = {std::vector<float>{0.25f, 4.0f}, std::vector<float>{1e-20f}};
    TempDir dir("state");
    save_train_state(dir / "s.state", s);
    const auto back = load_train_state(dir / "s.state");
    EXPECT_EQ(back.epoch, 4);
    EXPECT_EQ(back.adam.step, 17);
    EXPECT_EQ(back.adam.m, s.adam.m);
    EXPECT_EQ(back.adam.v, s.adam.v);
    EXPECT_THROW(load_train_state(dir / "missing"), std::runtime_error);
}
