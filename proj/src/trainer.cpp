#include "din/trainer.hpp"

#include "din/checkpoint.hpp"
#include "din/image_io.hpp"
#include "din/log.hpp"
#include "din/ops.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace din {

void TrainConfig::validate() const {
    if (patch_size < 2 || patch_size % 2 != 0)
        throw std::invalid_argument("patch_size must be even and >= 2");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (steps_per_epoch < 0 || max_steps_per_epoch < 0)
        throw std::invalid_argument("step counts must be non-negative");
    if (!(lr0 > 0)) throw std::invalid_argument("lr0 must be positive");
    if (lr_decay_every < 1) throw std::invalid_argument("lr_decay_every must be >= 1");
    if (!(lr_decay_factor > 0)) throw std::invalid_argument("lr_decay_factor must be positive");
    if (!(lambda_end >= 0 && lambda_end <= lambda_start && lambda_start <= 1))
        throw std::invalid_argument("need 0 <= lambda_end <= lambda_start <= 1");
}

double lambda_schedule(int epoch, int total_epochs, const TrainConfig& cfg) {
    if (total_epochs < 1 || epoch < 0 || epoch >= total_epochs)
        throw std::out_of_range("lambda_schedule: epoch outside [0, total_epochs)");
    const int half = total_epochs / 2;
    if (epoch < half) return cfg.lambda_start;
    // Linear segment anchored at (half - 1, start) and (E - 1, end).
    const int anchor = half - 1;
    const double progress = static_cast<double>(epoch - anchor) / static_cast<double>(total_epochs - 1 - anchor);
    return cfg.lambda_start - (cfg.lambda_start - cfg.lambda_end) * progress;
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
    if (epoch < 0) throw std::out_of_range("lr_schedule: negative epoch");
    const int decays = epoch / cfg.lr_decay_every;
    return cfg.lr0 / std::pow(cfg.lr_decay_factor, decays);
}

template <typename T>
LossTerms<T> total_loss(const Tensor<T>& intermediate, const Tensor<T>& final,
                        const Tensor<T>& target, double lambda) {
    const auto inter_term = l1_loss(intermediate, target);
    const auto final_term = l1_loss(final, target);
    LossTerms<T> terms;
    terms.intermediate = static_cast<double>(inter_term.item());
    terms.final = static_cast<double>(final_term.item());
    terms.total = add(scale(inter_term, static_cast<T>(lambda)), scale(final_term, static_cast<T>(1.0 - lambda)));
    return terms;
}

template LossTerms<float> total_loss(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, double);
template LossTerms<double> total_loss(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                      double);

std::vector<TrainPair> load_pairs(const Manifest& manifest, int min_size) {
    std::vector<TrainPair> pairs;
    for (const auto& e : manifest.entries) {
        TrainPair p{read_image(manifest.resolve(e.input)), read_image(manifest.resolve(e.target))};
        if (!p.input.same_shape(p.target))
            throw std::runtime_error("input and target differ in size: " + e.input.string());
        if (p.input.height() < min_size || p.input.width() < min_size) {
            log_warning("skipping " + e.input.string() + ": smaller than the " +
                        std::to_string(min_size) + " pixel patch");
            continue;
        }
        pairs.push_back(std::move(p));
    }
    return pairs;
}

std::vector<TrainSample> sample_patches(const std::vector<TrainPair>& pairs, int patch_size,
                                        int batch_size, std::mt19937_64& rng) {
    if (patch_size < 2 || patch_size % 2 != 0) throw std::invalid_argument("patch size must be even");
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < pairs.size(); ++i)
        if (pairs[i].input.height() >= patch_size && pairs[i].input.width() >= patch_size)
            eligible.push_back(i);
    if (eligible.empty()) throw std::runtime_error("sample_patches: no image is as large as the patch");

    std::vector<TrainSample> batch;
    batch.reserve(static_cast<std::size_t>(batch_size));
    for (int b = 0; b < batch_size; ++b) {
        const auto& pair = pairs[eligible[std::uniform_int_distribution<std::size_t>(0, eligible.size() - 1)(rng)]];
        const int max_row_pairs = (pair.input.height() - patch_size) / 2;
        const int y = 2 * std::uniform_int_distribution<int>(0, max_row_pairs)(rng);
        const int x = std::uniform_int_distribution<int>(0, pair.input.width() - patch_size)(rng);
        batch.push_back({split_fields(pair.input.crop(y, x, patch_size, patch_size)),
                         pair.target.crop(y, x, patch_size, patch_size)});
    }
    return batch;
}

TrainSample hflip(const TrainSample& s) {
    return {{s.input_fields.odd_field.flipped_horizontal(), s.input_fields.even_field.flipped_horizontal()},
            s.target.flipped_horizontal()};
}

TrainSample vflip(const TrainSample& s) {
    return {split_fields(merge_fields(s.input_fields).flipped_vertical()), s.target.flipped_vertical()};
}

namespace {

int factorial(int n) { return n <= 1 ? 1 : n * factorial(n - 1); }

Frame permuted(const Frame& f, std::span<const int> order) {
    Frame out(f.height(), f.width(), f.channels(), f.range());
    const auto plane = static_cast<std::size_t>(f.height()) * static_cast<std::size_t>(f.width());
    for (int c = 0; c < f.channels(); ++c)
        std::copy_n(f.pixels().data() + static_cast<std::size_t>(order[static_cast<std::size_t>(c)]) * plane, plane,
                    out.pixels().data() + static_cast<std::size_t>(c) * plane);
    return out;
}

}  // namespace

TrainSample permute_channels(const TrainSample& s, std::span<const int> order) {
    if (order.size() != static_cast<std::size_t>(s.target.channels()))
        throw std::invalid_argument("permute_channels: order has " + std::to_string(order.size()) +
                                    " entries for " + std::to_string(s.target.channels()) + " channels");
    return {{permuted(s.input_fields.odd_field, order), permuted(s.input_fields.even_field, order)},
            permuted(s.target, order)};
}

TrainSample augment_flip(const TrainSample& sample, std::mt19937_64& rng, const TrainConfig& cfg) {
    std::bernoulli_distribution coin(0.5);
    const bool h = coin(rng);
    const bool v = coin(rng);
    TrainSample out = sample;
    if (cfg.hflip && h) out = hflip(out);
    if (cfg.vflip && v) out = vflip(out);
    if (cfg.channel_shuffle && out.target.channels() > 1) {
        std::vector<int> order(static_cast<std::size_t>(out.target.channels()));
        std::iota(order.begin(), order.end(), 0);
        const int k = std::uniform_int_distribution<int>(0, factorial(out.target.channels()) - 1)(rng);
        for (int i = 0; i < k; ++i) std::next_permutation(order.begin(), order.end());
        out = permute_channels(out, order);
    }
    return out;
}

namespace {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), 0x7a1e5u};
    std::array<std::uint32_t, 2> words{};
    seq.generate(words.begin(), words.end());
    return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

fs::path state_path(const fs::path& checkpoint) {
    return fs::path(checkpoint.string() + ".state");
}

}  // namespace

std::string TrainLog::to_csv() const {
    std::ostringstream out;
    out << "epoch,loss_total,loss_inter,loss_final,lambda,lr\n";
    for (const auto& e : epochs)
        out << e.epoch << ',' << format_double(e.loss_total) << ',' << format_double(e.loss_inter) << ','
            << format_double(e.loss_final) << ',' << format_double(e.lambda) << ',' << format_double(e.lr)
            << '\n';
    return out.str();
}

void TrainLog::write_csv(const fs::path& path) const {
    const auto text = to_csv();
    write_atomically(path, [&](std::ostream& out) { out << text; });
}

TrainLog TrainLog::read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    TrainLog log;
    std::string line;
    std::getline(in, line);
    if (line != "epoch,loss_total,loss_inter,loss_final,lambda,lr")
        throw std::runtime_error("unexpected train log header in " + path.string());
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        EpochRecord r;
        if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%lf", &r.epoch, &r.loss_total, &r.loss_inter,
                        &r.loss_final, &r.lambda, &r.lr) != 6)
            throw std::runtime_error("malformed train log line: " + line);
        log.epochs.push_back(r);
    }
    return log;
}

void save_train_state(const fs::path& path, const TrainState& state) {
    std::string bytes = "DINSTATE1\nepoch " + std::to_string(state.epoch) + "\nstep " +
                        std::to_string(state.adam.step) + "\ntensors " +
                        std::to_string(state.adam.m.size()) + "\n";
    for (const auto& m : state.adam.m) bytes += std::to_string(m.size()) + "\n";
    bytes += "end\n";
    auto put = [&](const std::vector<float>& values) {
        for (float v : values) {
            const auto bits = std::bit_cast<std::uint32_t>(v);
            for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
        }
    };
    for (const auto& m : state.adam.m) put(m);
    for (const auto& v : state.adam.v) put(v);
    write_atomically(path, [&](std::ostream& out) { out.write(bytes.data(), static_cast<std::streamsize>(bytes.size())); });
}

TrainState load_train_state(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open training state " + path.string());
    std::string line;
    auto expect = [&](const std::string& key) {
        std::getline(in, line);
        std::istringstream ls(line);
        std::string k;
        long long value = 0;
        if (!(ls >> k >> value) || k != key) throw std::runtime_error("bad training state field " + key);
        return value;
    };
    std::getline(in, line);
    if (line != "DINSTATE1") throw std::runtime_error(path.string() + " is not a training state file");
    TrainState state;
    state.epoch = static_cast<int>(expect("epoch"));
    state.adam.step = expect("step");
    const auto count = static_cast<std::size_t>(expect("tensors"));
    std::vector<std::size_t> sizes(count);
    for (auto& s : sizes) {
        std::getline(in, line);
        s = std::stoull(line);
    }
    std::getline(in, line);
    if (line != "end") throw std::runtime_error("bad training state header");
    auto get = [&](std::size_t n) {
        std::vector<float> values(n);
        for (auto& v : values) {
            unsigned char b[4];
            in.read(reinterpret_cast<char*>(b), 4);
            if (!in) throw std::runtime_error("truncated training state");
            v = std::bit_cast<float>(static_cast<std::uint32_t>(b[0] | (b[1] << 8) | (b[2] << 16)) |
                                     (static_cast<std::uint32_t>(b[3]) << 24));
        }
        return values;
    };
    for (auto s : sizes) state.adam.m.push_back(get(s));
    for (auto s : sizes) state.adam.v.push_back(get(s));
    return state;
}

int steps_per_epoch(const std::vector<TrainPair>& pairs, const TrainConfig& cfg) {
    int steps = cfg.steps_per_epoch;
    if (steps == 0) {
        const double patch_area = static_cast<double>(cfg.patch_size) * cfg.patch_size;
        long long samples = 0;
        for (const auto& p : pairs)
            samples += static_cast<long long>(std::ceil(p.input.height() * static_cast<double>(p.input.width()) / patch_area));
        steps = static_cast<int>((samples + cfg.batch_size - 1) / cfg.batch_size);
    }
    if (cfg.max_steps_per_epoch > 0) steps = std::min(steps, cfg.max_steps_per_epoch);
    return std::max(steps, 1);
}

TrainResult train(const std::vector<TrainPair>& pairs, const DinConfig& model_cfg, const TrainConfig& cfg,
                  const TrainOptions& options) {
    cfg.validate();
    model_cfg.validate();
    if (pairs.empty()) throw std::invalid_argument("train: no training pairs");

    TrainResult result;
    TrainState state;
    if (options.resume_from) {
        result.params = load_checkpoint(*options.resume_from);
        if (!(result.params.config == model_cfg))
            throw std::invalid_argument("train: checkpoint configuration differs from the requested model");
        state = load_train_state(state_path(*options.resume_from));
    } else {
        result.params = build<float>(model_cfg, cfg.seed);
    }
    auto params = result.params.tensors();
    state.adam.ensure(params);

    if (!options.out_dir.empty()) fs::create_directories(options.out_dir);
    const int steps = steps_per_epoch(pairs, cfg);

    for (int epoch = state.epoch + 1; epoch < cfg.epochs; ++epoch) {
        const double lambda = lambda_schedule(epoch, cfg.epochs, cfg);
        const double lr = lr_schedule(epoch, cfg);
        std::mt19937_64 rng(epoch_seed(cfg.seed, epoch));
        EpochRecord record{epoch, 0, 0, 0, lambda, lr};

        for (int s = 0; s < steps; ++s) {
            auto batch = sample_patches(pairs, cfg.patch_size, cfg.batch_size, rng);
            std::vector<Frame> odd, even, target;
            for (auto& sample : batch) {
                sample = augment_flip(sample, rng, cfg);
                odd.push_back(std::move(sample.input_fields.odd_field));
                even.push_back(std::move(sample.input_fields.even_field));
                target.push_back(std::move(sample.target));
            }
            const auto out = forward(result.params, frames_to_tensor<float>(odd), frames_to_tensor<float>(even));
            const auto loss = total_loss(out.intermediate, out.final, frames_to_tensor<float>(target), lambda);
            const double value = static_cast<double>(loss.total.item());
            if (!std::isfinite(value))
                throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                         std::to_string(s));
            loss.total.backward();
            adam_step(params, lr, state.adam);
            result.params.zero_grad();

            StepRecord step{epoch, state.adam.step, value, loss.intermediate, loss.final};
            result.log.steps.push_back(step);
            if (options.on_step) options.on_step(step);
            record.loss_total += value;
            record.loss_inter += loss.intermediate;
            record.loss_final += loss.final;
        }
        record.loss_total /= steps;
        record.loss_inter /= steps;
        record.loss_final /= steps;
        result.log.epochs.push_back(record);
        state.epoch = epoch;
        if (options.on_epoch) options.on_epoch(record);

        if (!options.out_dir.empty()) {
            const bool last = epoch + 1 == cfg.epochs;
            if (last || (epoch + 1) % std::max(options.checkpoint_every, 1) == 0) {
                char name[32];
                std::snprintf(name, sizeof(name), "epoch_%04d.din", epoch);
                save_checkpoint(options.out_dir / name, result.params);
                save_train_state(state_path(options.out_dir / name), state);
            }
            result.log.write_csv(options.out_dir / "train_log.csv");
        }
    }
    if (!options.out_dir.empty()) save_checkpoint(options.out_dir / "final.din", result.params);
    return result;
}

TrainResult train(const Manifest& manifest, const DinConfig& model_cfg, const TrainConfig& cfg,
                  const TrainOptions& options) {
    if (manifest.entries.empty()) throw std::invalid_argument("train: empty manifest");
    return train(load_pairs(manifest, cfg.patch_size), model_cfg, cfg, options);
}

}  // namespace din
