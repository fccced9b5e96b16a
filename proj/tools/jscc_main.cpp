// Command-line entry points: train, eval, gradcheck, demo.
//
// Exit codes:
//   0  success
//   2  usage or configuration error
//   3  missing resource (config file, checkpoint, dataset, image)
//   4  training failure (divergence, non-finite loss)
//   5  numeric failure (SVD non-convergence, domain violations)
//   6  verification failure (gradcheck tolerance exceeded)

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "jscc/checkpoint.hpp"
#include "jscc/config.hpp"
#include "jscc/eval.hpp"
#include "jscc/pipeline.hpp"
#include "jscc/report.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitResource = 3;
constexpr int kExitTraining = 4;
constexpr int kExitNumeric = 5;
constexpr int kExitVerify = 6;

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool force = false;
    std::vector<std::string> checkpoints;  // stage=stem
};

jscc::RunConfig load_config(const CommonArgs& args) {
    jscc::RunConfig rc = jscc::load_run_config(args.config_path);
    if (!args.out_dir.empty()) rc.out_dir = args.out_dir;
    if (const char* env = std::getenv("JSCC_OUT_DIR")) rc.out_dir = env;
    if (args.seed_set) rc.master_seed = args.seed;
    rc.validate();
    return rc;
}

template <typename S>
void apply_checkpoint_overrides(jscc::Pipeline<S>& pipe, const CommonArgs& args) {
    for (const auto& spec : args.checkpoints) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) {
            throw jscc::ConfigError("--checkpoint expects stage=stem, got '" + spec + "'");
        }
        pipe.set_checkpoint_stem(jscc::stage_from_string(spec.substr(0, eq)),
                                 spec.substr(eq + 1));
    }
}

template <typename S>
int run_train(const jscc::RunConfig& rc, const CommonArgs& args) {
    jscc::Pipeline<S> pipe(rc);
    pipe.set_force(args.force);
    apply_checkpoint_overrides(pipe, args);
    pipe.train(std::cout);
    std::cout << "checkpoints in " << rc.out_dir << "\n";
    return kExitOk;
}

template <typename S>
int run_eval(const jscc::RunConfig& rc, const CommonArgs& args) {
    jscc::Pipeline<S> pipe(rc);
    pipe.set_force(args.force);
    apply_checkpoint_overrides(pipe, args);
    jscc::SweepReport report = pipe.evaluate(std::cout);
    if (!pipe.hash_warnings().empty()) std::cerr << pipe.hash_warnings();

    std::filesystem::create_directories(rc.out_dir);
    const std::filesystem::path base(rc.out_dir);
    jscc::write_csv(report, (base / "report.csv").string());
    jscc::write_json(report, (base / "report.json").string());
    jscc::write_gnuplot(report, (base / "report_curves.dat").string());

    const auto verdicts = jscc::compare_trends(report);
    const std::string table = jscc::format_verdict_table(verdicts);
    std::cout << table;
    std::ofstream vf(base / "verdicts.txt", std::ios::trunc);
    vf << table;
    std::cout << "report files in " << rc.out_dir << "\n";
    return kExitOk;
}

// Finite-difference sweep of every differentiable component on the miniature
// configuration, plus a per-parameter-group check of the full pipeline.
int run_gradcheck() {
    using jscc::Tensor;
    using T = Tensor<double>;
    using jscc::Shape;

    jscc::ModelConfig mc;
    mc.n_tx = 4;
    mc.n_rx = 4;
    mc.d = 2;
    mc.d_prime = 8;
    mc.n_blocks = 2;
    mc.heads = 2;
    mc.c = 1;
    mc.h = 8;
    mc.w = 8;
    mc.c_prime = 8;
    mc.base_width = 4;
    mc.snr_hidden = 4;

    struct Row {
        std::string component;
        double max_rel_err;
        double tol;
    };
    std::vector<Row> rows;
    jscc::Rng rng(20240901);

    auto check = [&](const std::string& name, double tol,
                     const std::function<T(const std::vector<T>&)>& f, std::vector<T> inputs) {
        const auto rep = jscc::grad_check<double>(f, std::move(inputs), 1e-6);
        rows.push_back({name, rep.max_rel_err, tol});
    };

    {
        T a = T::randn({5, 4}, rng), b = T::randn({4, 3}, rng), w = T::randn({5, 3}, rng);
        check("matmul", 1e-5,
              [&](const std::vector<T>& in) { return sum(mul(matmul(in[0], in[1]), w)); },
              {a, b});
    }
    {
        T x = T::randn({3, 4}, rng), y = T::randn({3, 4}, rng);
        check("elementwise", 1e-5,
              [](const std::vector<T>& in) {
                  return sum(add(mul(in[0], in[1]), gelu(sub(in[0], relu(in[1])))));
              },
              {x, y});
    }
    {
        T x = T::randn({4, 5}, rng), w = T::randn({4, 5}, rng);
        check("softmax", 1e-5,
              [&](const std::vector<T>& in) { return sum(mul(softmax(in[0], 1), w)); }, {x});
    }
    {
        T x = T::randn({3, 8}, rng), g = T::randn({8}, rng), b = T::randn({8}, rng);
        T w = T::randn({3, 8}, rng);
        check("layer_norm", 1e-5,
              [&](const std::vector<T>& in) {
                  return sum(mul(layer_norm(in[0], in[1], in[2]), w));
              },
              {x, g, b});
    }
    {
        T q = T::randn({3, 8}, rng), k = T::randn({3, 8}, rng), v = T::randn({3, 8}, rng);
        check("attention", 1e-4,
              [](const std::vector<T>& in) {
                  T o = jscc::multi_head_attention(in[0], in[1], in[2], 2);
                  return mean(mul(o, o));
              },
              {q, k, v});
    }
    {
        T z = T::randn({4, 4}, rng);
        check("power_normalize", 1e-4,
              [](const std::vector<T>& in) {
                  T o = jscc::power_normalize_bridge(in[0]);
                  return sum(mul(o, scale(sigmoid(o), 1.3)));
              },
              {z});
    }
    {
        jscc::ChannelRealization r = jscc::make_realization(4, 4, 0.05, 5.0, 99);
        jscc::ComplexMatrix noise = jscc::realization_noise(r, 3);
        T z = T::randn({4, 6}, rng);
        check("transmit_equalize", 1e-5,
              [&](const std::vector<T>& in) {
                  T through = jscc::complex_left_multiply(
                      jscc::svd(r.h_est)->u.hermitian(),
                      jscc::transmit_bridge(in[0], r.h_p, noise));
                  return sum(mul(through, through));
              },
              {z});
    }

    // full pipeline, one gradcheck per parameter group
    jscc::Model<double> model(mc, 4242, jscc::InitMode::kFullyRandom);
    jscc::ChannelRealization r = jscc::make_realization(mc.n_rx, mc.n_tx, 0.05, 7.0, 31337);
    jscc::ComplexMatrix noise = jscc::realization_noise(r, mc.d);
    jscc::Rng img_rng(7);
    T x = T::uniform({mc.c, mc.h, mc.w}, img_rng, 0.0, 1.0);
    T target = T::uniform({mc.c, mc.h, mc.w}, img_rng, 0.0, 1.0);
    auto full_loss = [&](const std::vector<T>&) {
        auto out = model.forward(x, r, noise, jscc::Variant::kHana);
        return jscc::l1_loss(out.x_hat, target);
    };
    for (const auto& group : model.store().group_names()) {
        std::vector<T> params;
        for (const auto& e : model.store().entries()) {
            if (e.group == group) params.push_back(e.tensor);
        }
        check("pipeline." + group, 1e-4, full_loss, std::move(params));
    }

    bool ok = true;
    std::printf("%-28s %14s %10s  status\n", "component", "max_rel_err", "tolerance");
    for (const auto& row : rows) {
        const bool pass = row.max_rel_err < row.tol;
        ok = ok && pass;
        std::printf("%-28s %14.3e %10.0e  %s\n", row.component.c_str(), row.max_rel_err,
                    row.tol, pass ? "ok" : "FAIL");
    }
    return ok ? kExitOk : kExitVerify;
}

template <typename S>
int run_demo(const jscc::RunConfig& rc, const CommonArgs& args, const std::string& image_path,
             double snr_db, double sigma_e) {
    jscc::Model<S> model(rc.model, jscc::derive_seed(rc.master_seed, "model.init"));
    bool trained = false;
    if (!args.checkpoints.empty()) {
        const auto& spec = args.checkpoints.front();
        const auto eq = spec.find('=');
        const std::string stem = eq == std::string::npos ? spec : spec.substr(eq + 1);
        jscc::load_checkpoint(model.store(), stem, jscc::config_hash(rc), args.force);
        trained = true;
    }

    std::vector<double> pixels;
    jscc::ImageDims dims{rc.model.c, rc.model.h, rc.model.w};
    if (!image_path.empty()) {
        pixels = jscc::fit_to_dims(jscc::load_pnm(image_path), dims, image_path);
    } else {
        jscc::ProceduralSource source(dims, jscc::derive_seed(rc.master_seed, "demo"));
        pixels = source.image(0);
    }

    jscc::ChannelRealization r = jscc::make_realization(
        rc.model.n_rx, rc.model.n_tx, sigma_e * sigma_e, snr_db,
        jscc::derive_seed(rc.master_seed, "demo.channel"));
    jscc::ComplexMatrix noise = jscc::realization_noise(r, rc.model.d);
    jscc::Tensor<S> x = jscc::image_tensor<S>(pixels, dims);
    auto out = model.forward(x, r, noise, jscc::Variant::kHana);

    double power = 0.0;
    for (S v : out.z_c.values()) power += static_cast<double>(v) * static_cast<double>(v);
    power /= static_cast<double>(rc.model.n_tx * rc.model.d);

    std::cout << "demo round-trip (" << (trained ? "checkpointed" : "untrained") << " model)\n";
    std::cout << "  snr_db = " << snr_db << ", sigma_e = " << sigma_e << "\n";
    std::cout << "  mean symbol power = " << power << "\n";
    std::cout << "  psnr_db = " << jscc::psnr(x, out.x_hat) << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MIMO semantic image transmission with channel-matrix adaptation"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string image_path;
    double demo_snr = 5.0;
    double demo_sigma_e = 0.05;

    auto add_common = [&](CLI::App* cmd, bool config_required) {
        cmd->add_option("--config", args.config_path, "run configuration file")
            ->required(config_required);
        cmd->add_option("--out", args.out_dir, "output directory override");
        cmd->add_option("--seed", args.seed, "master seed override")
            ->each([&](const std::string&) { args.seed_set = true; });
        cmd->add_flag("--force", args.force, "accept config-hash mismatches on load");
        cmd->add_option("--checkpoint", args.checkpoints,
                        "stage=stem checkpoint override (repeatable)");
    };

    CLI::App* cmd_train = app.add_subcommand("train", "run the training stages");
    add_common(cmd_train, true);
    CLI::App* cmd_eval = app.add_subcommand("eval", "sweep the evaluation grid");
    add_common(cmd_eval, true);
    CLI::App* cmd_gradcheck =
        app.add_subcommand("gradcheck", "finite-difference audit of every component");
    CLI::App* cmd_demo = app.add_subcommand("demo", "single-image round trip");
    add_common(cmd_demo, true);
    cmd_demo->add_option("--image", image_path, "PPM/PGM image (procedural if omitted)");
    cmd_demo->add_option("--snr", demo_snr, "channel SNR in dB");
    cmd_demo->add_option("--sigma-e", demo_sigma_e, "estimation error level");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (cmd_gradcheck->parsed()) return run_gradcheck();
        const jscc::RunConfig rc = load_config(args);
        const bool f32 = rc.precision == "f32";
        if (cmd_train->parsed()) {
            return f32 ? run_train<float>(rc, args) : run_train<double>(rc, args);
        }
        if (cmd_eval->parsed()) {
            return f32 ? run_eval<float>(rc, args) : run_eval<double>(rc, args);
        }
        if (cmd_demo->parsed()) {
            return f32 ? run_demo<float>(rc, args, image_path, demo_snr, demo_sigma_e)
                       : run_demo<double>(rc, args, image_path, demo_snr, demo_sigma_e);
        }
    } catch (const jscc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const jscc::IoError& e) {
        std::cerr << "resource error: " << e.what() << "\n";
        return kExitResource;
    } catch (const jscc::TrainingError& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return kExitTraining;
    } catch (const jscc::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const jscc::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return kExitUsage;
}
