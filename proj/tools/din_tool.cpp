#include "din/checkpoint.hpp"
#include "din/classic.hpp"
#include "din/image_io.hpp"
#include "din/interlace.hpp"
#include "din/metrics.hpp"
#include "din/model.hpp"
#include "din/toyset.hpp"
#include "din/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace din;

namespace {

// Reads "key = value" lines ('#' starts a comment) and turns them into
// "--key=value" arguments. Underscores in keys are accepted as dashes.
std::vector<std::string> config_arguments(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config file " + path.string());
    std::vector<std::string> args;
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line.substr(0, line.find('#')));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
        std::string key = trim(line.substr(0, eq));
        std::replace(key.begin(), key.end(), '_', '-');
        if (key == "config") throw std::runtime_error("config files cannot include other config files");
        args.push_back("--" + key + "=" + trim(line.substr(eq + 1)));
    }
    return args;
}

// Config-file values go right after the subcommand name so that flags given
// on the command line (parsed later, last one wins) override them.
std::vector<std::string> expand_config(int argc, char** argv, const std::vector<std::string>& subcommands) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::optional<fs::path> config;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config = args[i + 1];
            args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i) + 2);
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            config = args[i].substr(9);
            args.erase(args.begin() + static_cast<long>(i));
            break;
        }
    }
    if (!config) return args;
    auto sub = std::find_first_of(args.begin(), args.end(), subcommands.begin(), subcommands.end());
    if (sub == args.end()) throw std::runtime_error("--config needs a subcommand");
    const auto extra = config_arguments(*config);
    args.insert(sub + 1, extra.begin(), extra.end());
    return args;
}

Compression parse_compression(const std::string& name) {
    if (name == "none") return Compression::none;
    if (name == "blockdct") return Compression::blockdct;
    if (name == "external") return Compression::external;
    throw std::runtime_error("unknown compression " + name);
}

struct ModelFlags {
    DinConfig cfg;
    void add(CLI::App* app) {
        app->add_option("--channels", cfg.base_channels, "Base feature channels");
        app->add_option("--cis-blocks", cfg.cis_blocks, "Residual blocks in the co-interpolation stage");
        app->add_option("--fms-pre-blocks", cfg.fms_base_blocks_pre, "Base-branch blocks before the merge");
        app->add_option("--fms-post-blocks", cfg.fms_base_blocks_post, "Blocks after the merge");
        app->add_option("--fms-down-blocks", cfg.fms_down_blocks, "Blocks in the downscale branch");
    }
};

const std::vector<std::string> kClassicMethods = {"weave", "bob", "ela", "motion"};

Frame run_method(const std::string& method, const Frame& input, double threshold,
                 const DinParams<float>* params) {
    if (method == "weave") return weave(input);
    if (method == "bob") return bob_line_average(input);
    if (method == "ela") return ela(input);
    if (method == "motion") return motion_adaptive(input, threshold);
    if (method == "din") return deinterlace_din(*params, input);
    throw std::runtime_error("unknown method " + method);
}

// Horizontal strip of equally sized crops separated by 2-pixel white gaps.
Frame side_by_side(const std::vector<Frame>& tiles) {
    constexpr int gap = 2;
    const auto& first = tiles.front();
    const int w = static_cast<int>(tiles.size()) * (first.width() + gap) - gap;
    Frame strip(first.height(), w, first.channels(), PixelRange::unit);
    std::fill(strip.pixels().begin(), strip.pixels().end(), 1.0f);
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        const Frame t = tiles[i].to_range(PixelRange::unit);
        const int x0 = static_cast<int>(i) * (first.width() + gap);
        for (int c = 0; c < t.channels(); ++c)
            for (int y = 0; y < t.height(); ++y)
                std::copy_n(t.row(c, y), t.width(), strip.row(c, y) + x0);
    }
    return strip;
}

int cmd_synth(const fs::path& frames, const fs::path& out, const DegradationConfig& cfg, int stride) {
    const auto manifest = synth_dataset(frames, out, cfg, stride);
    std::cout << "wrote " << manifest.size() << " pairs to " << (out / "manifest.tsv").string() << '\n';
    return 0;
}

int cmd_train(const fs::path& manifest_path, const fs::path& out, const DinConfig& model,
              const TrainConfig& cfg, int checkpoint_every, const std::string& resume, bool quiet) {
    TrainOptions options;
    options.out_dir = out;
    options.checkpoint_every = checkpoint_every;
    if (!resume.empty()) options.resume_from = fs::path(resume);
    if (!quiet)
        options.on_epoch = [&](const EpochRecord& r) {
            std::printf("epoch %d  loss %.6f  inter %.6f  final %.6f  lambda %.4f  lr %.3g\n", r.epoch,
                        r.loss_total, r.loss_inter, r.loss_final, r.lambda, r.lr);
            std::fflush(stdout);
        };
    const auto manifest = read_manifest(manifest_path);
    train(manifest, model, cfg, options);
    std::cout << "wrote " << (out / "final.din").string() << '\n';
    return 0;
}

int cmd_bench(const fs::path& manifest_path, const fs::path& out, const std::string& checkpoint,
              double threshold, int crop_size) {
    const auto manifest = read_manifest(manifest_path);
    if (manifest.entries.empty()) throw std::runtime_error("empty manifest " + manifest_path.string());
    std::optional<DinParams<float>> params;
    std::vector<std::string> methods = kClassicMethods;
    if (!checkpoint.empty()) {
        params = load_checkpoint(checkpoint);
        methods.push_back("din");
    }
    fs::create_directories(out / "crops");
    for (const auto& m : methods) fs::create_directories(out / m);

    MetricsReport report;
    for (const auto& entry : manifest.entries) {
        const Frame input = read_image(manifest.resolve(entry.input));
        const Frame target = read_image(manifest.resolve(entry.target));
        const std::string name = entry.target.filename().string();
        const int ch = std::min(crop_size, target.height());
        const int cw = std::min(crop_size, target.width());
        const int y0 = ((target.height() - ch) / 2) & ~1;
        const int x0 = (target.width() - cw) / 2;
        std::vector<Frame> tiles{input.crop(y0, x0, ch, cw)};
        for (const auto& m : methods) {
            const Frame result = run_method(m, input, threshold, params ? &*params : nullptr);
            write_image(out / m / name, result);
            report.rows.push_back({name, m, psnr(result, target), ssim(result, target)});
            tiles.push_back(result.crop(y0, x0, ch, cw));
        }
        tiles.push_back(target.crop(y0, x0, ch, cw));
        write_image(out / "crops" / name, side_by_side(tiles));
    }
    report.aggregate();
    report.write_csv(out / "bench.csv");
    for (const auto& r : report.aggregates)
        std::printf("%-7s psnr %8s dB  ssim %s\n", r.method.c_str(), format_metric(r.psnr_db).c_str(),
                    format_metric(r.ssim).c_str());
    std::cout << "crop columns: input";
    for (const auto& m : methods) std::cout << ' ' << m;
    std::cout << " target\n";
    return 0;
}

int cmd_toyset(const fs::path& out, int scenes, int holdout, int size, std::uint64_t seed,
               const DegradationConfig& degradation) {
    if (holdout < 1 || holdout >= scenes)
        throw std::runtime_error("--holdout must be between 1 and scenes - 1");
    const auto frames = write_toy_sequence(out / "frames", scenes, size, seed);
    // The first scenes train, the last `holdout` scenes are held out.
    const std::size_t split = 2 * static_cast<std::size_t>(scenes - holdout);
    for (const char* part : {"train_frames", "test_frames"}) fs::create_directories(out / part);
    for (std::size_t i = 0; i < frames.size(); ++i)
        fs::rename(frames[i], out / (i < split ? "train_frames" : "test_frames") / frames[i].filename());
    fs::remove(out / "frames");
    auto cfg = degradation;
    const auto train_set = synth_dataset(out / "train_frames", out / "train", cfg, 2);
    cfg.seed = degradation.seed + 1;
    const auto test_set = synth_dataset(out / "test_frames", out / "test", cfg, 2);
    std::cout << "wrote " << train_set.size() << " training and " << test_set.size() << " held-out pairs to "
              << out.string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deinterlacing toolkit: dataset synthesis, classical and learned deinterlacers, training, evaluation"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.set_version_flag("--version", "din 1.0");
    std::string config_help;
    app.add_option("--config", config_help, "key=value file with defaults for the subcommand's flags");

    std::uint64_t seed = 0;
    auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", seed, "Seed for every random choice"); };

    DegradationConfig degradation;
    std::string compression = "none";
    auto add_degradation = [&](CLI::App* sub) {
        sub->add_option("--compression", compression, "Compression surrogate")
            ->check(CLI::IsMember({"none", "blockdct", "external"}));
        sub->add_option("--quality", degradation.quality, "blockdct quality")->check(CLI::Range(1, 100));
        sub->add_option("--external-cmd", degradation.external_command,
                        "Command template with {in} and {out} placeholders");
        sub->add_option("--sigma", degradation.noise_sigma, "Gaussian noise sigma in [0,1] units")
            ->check(CLI::Range(0.0, 1.0));
    };

    // synth
    auto* synth = app.add_subcommand("synth", "Build an interlaced dataset from an ordered frame directory");
    fs::path synth_frames, synth_out;
    int stride = 1;
    synth->add_option("frames", synth_frames, "Directory of consecutive frames")->required()->check(CLI::ExistingDirectory);
    synth->add_option("out", synth_out, "Output directory")->required();
    synth->add_option("--stride", stride, "Frame step between pairs")->check(CLI::PositiveNumber);
    add_degradation(synth);
    add_seed(synth);

    // deint
    auto* deint = app.add_subcommand("deint", "Deinterlace one image");
    fs::path deint_in, deint_out;
    std::string method = "ela", checkpoint;
    double threshold = 0.05;
    deint->add_option("input", deint_in, "Interlaced image (PNG or PPM)")->required()->check(CLI::ExistingFile);
    deint->add_option("output", deint_out, "Output image")->required();
    deint->add_option("--method", method, "weave, bob, ela, motion or din")
        ->check(CLI::IsMember({"weave", "bob", "ela", "motion", "din"}));
    deint->add_option("--checkpoint", checkpoint, "DIN1 checkpoint (din only)");
    deint->add_option("--threshold", threshold, "Motion threshold (motion only)")->check(CLI::Range(0.0, 1.0));
    add_seed(deint);

    // train
    auto* train_cmd = app.add_subcommand("train", "Train the network on a manifest");
    fs::path train_manifest, train_out;
    ModelFlags train_model;
    TrainConfig tcfg;
    int checkpoint_every = 1;
    std::string resume;
    bool no_hflip = false, no_vflip = false, channel_shuffle = false, quiet = false;
    train_cmd->add_option("manifest", train_manifest, "manifest.tsv from synth")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("out", train_out, "Directory for checkpoints and train_log.csv")->required();
    train_model.add(train_cmd);
    train_cmd->add_option("--patch-size", tcfg.patch_size, "Square patch side (even)");
    train_cmd->add_option("--batch-size", tcfg.batch_size, "Patches per step");
    train_cmd->add_option("--epochs", tcfg.epochs, "Epochs");
    train_cmd->add_option("--steps-per-epoch", tcfg.steps_per_epoch, "Fixed steps per epoch (0: from the data)");
    train_cmd->add_option("--max-steps-per-epoch", tcfg.max_steps_per_epoch, "Cap on steps per epoch (0: none)");
    train_cmd->add_option("--lr", tcfg.lr0, "Initial learning rate");
    train_cmd->add_option("--lr-decay-every", tcfg.lr_decay_every, "Epochs between learning-rate drops");
    train_cmd->add_option("--lr-decay-factor", tcfg.lr_decay_factor, "Learning-rate divisor per drop");
    train_cmd->add_option("--lambda-start", tcfg.lambda_start, "Intermediate-loss weight, first half");
    train_cmd->add_option("--lambda-end", tcfg.lambda_end, "Intermediate-loss weight, last epoch");
    train_cmd->add_flag("--no-hflip", no_hflip, "Disable horizontal flips");
    train_cmd->add_flag("--channel-shuffle", channel_shuffle, "Randomly permute RGB channels per sample");
    train_cmd->add_flag("--no-vflip", no_vflip, "Disable vertical flips");
    train_cmd->add_option("--checkpoint-every", checkpoint_every, "Epochs between checkpoints")->check(CLI::PositiveNumber);
    train_cmd->add_option("--resume", resume, "Continue from an epoch checkpoint")->check(CLI::ExistingFile);
    train_cmd->add_flag("--quiet", quiet, "No per-epoch output");
    add_seed(train_cmd);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Score a directory of outputs against targets");
    fs::path eval_outputs, eval_targets, eval_csv;
    std::string eval_method = "output";
    eval_cmd->add_option("outputs", eval_outputs, "Method outputs")->required()->check(CLI::ExistingDirectory);
    eval_cmd->add_option("targets", eval_targets, "Ground truth, same filenames")->required()->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--method", eval_method, "Method name written to the CSV");
    eval_cmd->add_option("--csv", eval_csv, "Write the report here instead of stdout");

    // bench
    auto* bench = app.add_subcommand("bench", "Run every method over a test manifest");
    fs::path bench_manifest, bench_out;
    std::string bench_checkpoint;
    double bench_threshold = 0.05;
    int crop = 64;
    bench->add_option("manifest", bench_manifest, "Test manifest.tsv")->required()->check(CLI::ExistingFile);
    bench->add_option("out", bench_out, "Output directory (bench.csv, per-method images, crops/)")->required();
    bench->add_option("--checkpoint", bench_checkpoint, "Include DIN with this checkpoint")->check(CLI::ExistingFile);
    bench->add_option("--threshold", bench_threshold, "Motion threshold")->check(CLI::Range(0.0, 1.0));
    bench->add_option("--crop", crop, "Side of the comparison crops")->check(CLI::PositiveNumber);
    add_seed(bench);

    // info
    auto* info = app.add_subcommand("info", "Print the layer table and parameter count");
    ModelFlags info_model;
    std::string info_checkpoint;
    info_model.add(info);
    info->add_option("--checkpoint", info_checkpoint, "Describe this checkpoint instead")->check(CLI::ExistingFile);

    // toyset
    auto* toy = app.add_subcommand("toyset", "Generate the procedural moving-texture train/test set");
    fs::path toy_out;
    int scenes = 20, holdout = 4, size = 64;
    toy->add_option("out", toy_out, "Output directory")->required();
    toy->add_option("--scenes", scenes, "Scenes (one frame pair each)")->check(CLI::PositiveNumber);
    toy->add_option("--holdout", holdout, "Scenes reserved for testing");
    toy->add_option("--size", size, "Frame side in pixels (even)")->check(CLI::PositiveNumber);
    add_degradation(toy);
    add_seed(toy);

    std::vector<std::string> subcommands;
    for (auto* s : app.get_subcommands([](CLI::App*) { return true; })) subcommands.push_back(s->get_name());

    try {
        auto args = expand_config(argc, argv, subcommands);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "din: " << e.what() << '\n';
        return 2;
    }

    try {
        degradation.compression = parse_compression(compression);
        degradation.seed = seed;
        const bool uses_degradation = synth->parsed() || toy->parsed();
        if (uses_degradation) {
            if (!degradation.external_command.empty() && degradation.compression != Compression::external)
                throw std::runtime_error("--external-cmd requires --compression external");
            degradation.validate();
        }

        if (synth->parsed()) return cmd_synth(synth_frames, synth_out, degradation, stride);

        if (deint->parsed()) {
            if (method == "din" && checkpoint.empty())
                throw std::runtime_error("--method din requires --checkpoint <file>");
            if (method != "din" && !checkpoint.empty())
                throw std::runtime_error("--checkpoint only applies to --method din");
            std::optional<DinParams<float>> params;
            if (!checkpoint.empty()) params = load_checkpoint(checkpoint);
            write_image(deint_out, run_method(method, read_image(deint_in), threshold, params ? &*params : nullptr));
            return 0;
        }

        if (train_cmd->parsed()) {
            tcfg.seed = seed;
            tcfg.hflip = !no_hflip;
            tcfg.channel_shuffle = channel_shuffle;
            tcfg.vflip = !no_vflip;
            return cmd_train(train_manifest, train_out, train_model.cfg, tcfg, checkpoint_every, resume, quiet);
        }

        if (eval_cmd->parsed()) {
            const auto report = evaluate(eval_outputs, eval_targets, eval_method);
            if (eval_csv.empty())
                std::cout << report.to_csv();
            else
                report.write_csv(eval_csv);
            return 0;
        }

        if (bench->parsed()) return cmd_bench(bench_manifest, bench_out, bench_checkpoint, bench_threshold, crop);

        if (info->parsed()) {
            const auto params = info_checkpoint.empty() ? build<float>(info_model.cfg, 0) : load_checkpoint(info_checkpoint);
            const auto& c = params.config;
            std::printf("channels %d  cis_blocks %d  fms_pre %d  fms_post %d  fms_down %d\n", c.base_channels,
                        c.cis_blocks, c.fms_base_blocks_pre, c.fms_base_blocks_post, c.fms_down_blocks);
            for (const auto& l : params.layers)
                std::printf("  %-22s %s  stride %d\n", l.name.c_str(), l.weight.shape().str().c_str(), l.stride);
            std::printf("parameters: %zu\n", param_count(params));
            return 0;
        }

        if (toy->parsed()) {
            if (size % 2 != 0) throw std::runtime_error("--size must be even");
            return cmd_toyset(toy_out, scenes, holdout, size, seed, degradation);
        }
    } catch (const std::exception& e) {
        std::cerr << "din: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
