#include "gs/io.hpp"
#include "gs/msrn.hpp"
#include "gs/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace gs {

namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config files: JSON directly, or a flat TOML subset ([section], key = value)
// that is converted into the same JSON shape.
// ---------------------------------------------------------------------------

json parse_toml_subset(std::istream& in) {
    json doc = json::object();
    json* section = &doc;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line = line.substr(0, hash);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty())
            continue;
        if (line.front() == '[' && line.back() == ']') {
            std::string name = trim(line.substr(1, line.size() - 2));
            json* cur = &doc;
            std::stringstream ss(name);
            std::string part;
            while (std::getline(ss, part, '.')) {
                if (!cur->contains(part))
                    (*cur)[part] = json::object();
                cur = &(*cur)[part];
            }
            section = cur;
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw IoError("config: malformed line " + std::to_string(lineno));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
            (*section)[key] = value.substr(1, value.size() - 2);
        } else if (value == "true" || value == "false") {
            (*section)[key] = value == "true";
        } else if (!value.empty() && value.front() == '[') {
            (*section)[key] = json::parse(value); // arrays use JSON syntax
        } else {
            try {
                (*section)[key] = json::parse(value); // number
            } catch (const json::exception&) {
                throw IoError("config: cannot parse value on line " +
                              std::to_string(lineno));
            }
        }
    }
    return doc;
}

json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("config: cannot open " + path);
    const auto ext = std::filesystem::path(path).extension().string();
    if (ext == ".toml")
        return parse_toml_subset(in);
    try {
        json doc;
        in >> doc;
        return doc;
    } catch (const json::exception&) {
        // Fall back to the TOML subset for extensionless files.
        in.clear();
        in.seekg(0);
        return parse_toml_subset(in);
    }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key))
        out = j.at(key).get<T>();
}

void apply_config(const json& doc, TrainConfig& cfg) {
    if (doc.contains("loss")) {
        const auto& j = doc["loss"];
        maybe(j, "lambda", cfg.loss.lambda);
        maybe(j, "beta", cfg.loss.beta);
        maybe(j, "gamma", cfg.loss.gamma);
        maybe(j, "k_switch", cfg.loss.k_switch);
        maybe(j, "patch_count", cfg.loss.patch_count);
        maybe(j, "kernel", cfg.loss.kernel);
        maybe(j, "stride", cfg.loss.stride);
        maybe(j, "dssim_kernel", cfg.loss.dssim_kernel);
        maybe(j, "dssim_stride", cfg.loss.dssim_stride);
        maybe(j, "ssim_c1", cfg.loss.ssim_c1);
        maybe(j, "ssim_c2", cfg.loss.ssim_c2);
        maybe(j, "seed", cfg.loss.seed);
    }
    if (doc.contains("sh_init")) {
        const auto& j = doc["sh_init"];
        maybe(j, "max_degree", cfg.sh_init.max_degree);
        maybe(j, "distance_scale", cfg.sh_init.distance_scale);
        maybe(j, "neighbor_count", cfg.sh_init.neighbor_count);
        maybe(j, "initial_opacity", cfg.sh_init.initial_opacity);
        if (j.contains("distance_normalizer")) {
            const auto v = j["distance_normalizer"].get<std::string>();
            if (v == "median")
                cfg.sh_init.distance_normalizer = DistanceNormalizer::kMedian;
            else if (v == "none")
                cfg.sh_init.distance_normalizer = DistanceNormalizer::kNone;
            else
                throw IoError("config: distance_normalizer must be 'median' or 'none'");
        }
        if (j.contains("higher_fill")) {
            const auto v = j["higher_fill"].get<std::string>();
            if (v == "uniform")
                cfg.sh_init.higher_fill = HigherFill::kUniformFill;
            else if (v == "last_coeff")
                cfg.sh_init.higher_fill = HigherFill::kLastCoeffOnly;
            else
                throw IoError("config: higher_fill must be 'uniform' or 'last_coeff'");
        }
    }
    if (doc.contains("raster")) {
        const auto& j = doc["raster"];
        maybe(j, "dilation", cfg.raster.dilation);
        maybe(j, "transmittance_floor", cfg.raster.transmittance_floor);
        if (j.contains("background")) {
            const auto bg = j["background"].get<std::vector<double>>();
            if (bg.size() != 3)
                throw IoError("config: background must have 3 channels");
            cfg.raster.background = Rgb(bg[0], bg[1], bg[2]);
        }
    }
    if (doc.contains("train")) {
        const auto& j = doc["train"];
        maybe(j, "iterations", cfg.iterations);
        maybe(j, "prune_every", cfg.prune_every);
        maybe(j, "prune_threshold", cfg.prune_threshold);
        maybe(j, "seed", cfg.seed);
        maybe(j, "checkpoint_every", cfg.checkpoint_every);
        if (j.contains("learning_rates")) {
            const auto& lr = j["learning_rates"];
            maybe(lr, "position", cfg.learning_rates.position);
            maybe(lr, "log_scale", cfg.learning_rates.log_scale);
            maybe(lr, "rotation", cfg.learning_rates.rotation);
            maybe(lr, "opacity_logit", cfg.learning_rates.opacity_logit);
            maybe(lr, "sh_dc", cfg.learning_rates.sh_dc);
            maybe(lr, "sh_rest", cfg.learning_rates.sh_rest);
        }
    }
}

json config_to_json(const TrainConfig& cfg) {
    return json{
        {"loss",
         {{"lambda", cfg.loss.lambda},
          {"beta", cfg.loss.beta},
          {"gamma", cfg.loss.gamma},
          {"k_switch", cfg.loss.k_switch},
          {"patch_count", cfg.loss.patch_count},
          {"kernel", cfg.loss.kernel},
          {"stride", cfg.loss.stride},
          {"dssim_kernel", cfg.loss.dssim_kernel},
          {"dssim_stride", cfg.loss.dssim_stride},
          {"ssim_c1", cfg.loss.ssim_c1},
          {"ssim_c2", cfg.loss.ssim_c2},
          {"seed", cfg.loss.seed}}},
        {"sh_init",
         {{"max_degree", cfg.sh_init.max_degree},
          {"distance_scale", cfg.sh_init.distance_scale},
          {"neighbor_count", cfg.sh_init.neighbor_count},
          {"initial_opacity", cfg.sh_init.initial_opacity},
          {"distance_normalizer",
           cfg.sh_init.distance_normalizer == DistanceNormalizer::kMedian ? "median"
                                                                          : "none"},
          {"higher_fill", cfg.sh_init.higher_fill == HigherFill::kUniformFill
                              ? "uniform"
                              : "last_coeff"}}},
        {"raster",
         {{"dilation", cfg.raster.dilation},
          {"transmittance_floor", cfg.raster.transmittance_floor},
          {"background",
           {cfg.raster.background[0], cfg.raster.background[1], cfg.raster.background[2]}}}},
        {"train",
         {{"iterations", cfg.iterations},
          {"prune_every", cfg.prune_every},
          {"prune_threshold", cfg.prune_threshold},
          {"seed", cfg.seed},
          {"checkpoint_every", cfg.checkpoint_every},
          {"learning_rates",
           {{"position", cfg.learning_rates.position},
            {"log_scale", cfg.learning_rates.log_scale},
            {"rotation", cfg.learning_rates.rotation},
            {"opacity_logit", cfg.learning_rates.opacity_logit},
            {"sh_dc", cfg.learning_rates.sh_dc},
            {"sh_rest", cfg.learning_rates.sh_rest}}}}}};
}

std::vector<TrainView> load_views(const std::string& cameras_path) {
    std::vector<TrainView> views;
    for (auto& entry : io::load_cameras(cameras_path)) {
        TrainView v;
        v.camera = entry.camera;
        v.id = entry.id;
        v.ground_truth = io::load_image(entry.image_path);
        views.push_back(std::move(v));
    }
    return views;
}

void print_variance_table(const std::vector<double>& variances) {
    std::printf("Variance of spherical harmonics terms\n");
    std::printf("%-8s %s\n", "degree", "variance");
    for (size_t l = 0; l < variances.size(); ++l) {
        if (variances[l] == 0.0)
            std::printf("%-8zu 0.0\n", l);
        else
            std::printf("%-8zu %.6g\n", l, variances[l]);
    }
}

} // namespace

int cli_dispatch(const std::vector<std::string>& args) {
    CLI::App app{"Differentiable 3D Gaussian splatting toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    uint64_t seed = 0;
    app.add_option("--config", config_path, "Config file (JSON or flat TOML)");
    auto* seed_opt = app.add_option("--seed", seed, "Random seed");

    // init
    auto* cmd_init = app.add_subcommand("init", "Build a scene from a PLY point cloud");
    std::string init_ply, init_out, init_mode = "dynamic";
    cmd_init->add_option("--ply", init_ply, "Input point cloud")->required();
    cmd_init->add_option("--out", init_out, "Output checkpoint")->required();
    cmd_init->add_option("--sh-mode", init_mode, "standard|dynamic")
        ->check(CLI::IsMember({"standard", "dynamic"}));

    // train
    auto* cmd_train = app.add_subcommand("train", "Optimize a scene against views");
    std::string train_ckpt, train_cams, train_out, train_log_path;
    int64_t train_iters = -1;
    cmd_train->add_option("--checkpoint", train_ckpt, "Input checkpoint")->required();
    cmd_train->add_option("--cameras", train_cams, "Camera JSON")->required();
    cmd_train->add_option("--out", train_out, "Output checkpoint")->required();
    cmd_train->add_option("--log", train_log_path, "Training log (JSON lines)");
    cmd_train->add_option("--iterations", train_iters, "Override iteration count");

    // render
    auto* cmd_render = app.add_subcommand("render", "Render one camera to a PNG");
    std::string render_ckpt, render_cams, render_out;
    int render_cam_id = 0;
    cmd_render->add_option("--checkpoint", render_ckpt, "Input checkpoint")->required();
    cmd_render->add_option("--cameras", render_cams, "Camera JSON")->required();
    cmd_render->add_option("--camera-id", render_cam_id, "Camera id")->required();
    cmd_render->add_option("--out", render_out, "Output PNG")->required();

    // superres
    auto* cmd_sr = app.add_subcommand("superres", "Super-resolve a PNG");
    std::string sr_in, sr_weights, sr_out;
    cmd_sr->add_option("input", sr_in, "Input PNG")->required();
    cmd_sr->add_option("--weights", sr_weights, "Weight file")->required();
    cmd_sr->add_option("--out", sr_out, "Output PNG")->required();

    // metrics
    auto* cmd_metrics = app.add_subcommand("metrics", "PSNR/SSIM report");
    std::vector<std::string> metric_images;
    std::string metrics_ckpt, metrics_cams;
    cmd_metrics->add_option("images", metric_images, "Two PNGs to compare")->expected(0, 2);
    cmd_metrics->add_option("--checkpoint", metrics_ckpt, "Checkpoint to evaluate");
    cmd_metrics->add_option("--cameras", metrics_cams, "Camera JSON with ground truths");

    // sh-variance
    auto* cmd_var = app.add_subcommand("sh-variance", "Per-degree SH variance table");
    std::string var_ckpt;
    cmd_var->add_option("--checkpoint", var_ckpt, "Input checkpoint")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) { // --help
            std::cout << app.help();
            return 0;
        }
        std::cerr << e.what() << "\n" << app.help();
        return 1;
    }

    try {
        TrainConfig cfg;
        if (!config_path.empty())
            apply_config(load_config_file(config_path), cfg);
        if (seed_opt->count() > 0) {
            cfg.seed = seed;
            cfg.loss.seed = seed;
        }

        if (app.got_subcommand(cmd_init)) {
            const PointCloud cloud = io::load_ply(init_ply);
            const ShInitMode mode =
                init_mode == "standard" ? ShInitMode::kStandard : ShInitMode::kDynamic;
            io::Checkpoint ckpt;
            ckpt.iteration = 0;
            ckpt.set = init_scene(cloud, cfg.sh_init, mode);
            ckpt.config_json = config_to_json(cfg).dump();
            io::save_checkpoint(ckpt, init_out);
            std::printf("initialized %zu gaussians (%s SH) -> %s\n", ckpt.set.size(),
                        init_mode.c_str(), init_out.c_str());
            return 0;
        }

        if (app.got_subcommand(cmd_train)) {
            io::Checkpoint ckpt = io::load_checkpoint(train_ckpt);
            if (train_iters > 0)
                cfg.iterations = train_iters;
            const auto views = load_views(train_cams);
            const OptimizerState* opt = ckpt.optimizer ? &*ckpt.optimizer : nullptr;
            TrainResult result = train(ckpt.set, views, cfg, ckpt.iteration, opt);

            io::Checkpoint out_ckpt;
            out_ckpt.iteration = result.final_iteration;
            out_ckpt.set = std::move(result.set);
            out_ckpt.optimizer = std::move(result.optimizer);
            out_ckpt.config_json = config_to_json(cfg).dump();
            io::save_checkpoint(out_ckpt, train_out);
            if (!train_log_path.empty())
                write_train_log(result.log, train_log_path);
            const auto& last = result.log.iterations.back();
            std::printf("trained %lld iterations, final loss %.6f, %lld gaussians -> %s\n",
                        static_cast<long long>(cfg.iterations), last.total,
                        static_cast<long long>(last.gaussian_count), train_out.c_str());
            return 0;
        }

        if (app.got_subcommand(cmd_render)) {
            const io::Checkpoint ckpt = io::load_checkpoint(render_ckpt);
            const auto cameras = io::load_cameras(render_cams);
            const io::CameraEntry* entry = nullptr;
            for (const auto& c : cameras)
                if (c.id == render_cam_id)
                    entry = &c;
            if (!entry)
                throw IoError("render: no camera with id " + std::to_string(render_cam_id));
            const ImageF img = render(ckpt.set, entry->camera, cfg.raster);
            io::save_image(img, render_out);
            std::printf("rendered camera %d (%dx%d) -> %s\n", render_cam_id,
                        entry->camera.width, entry->camera.height, render_out.c_str());
            return 0;
        }

        if (app.got_subcommand(cmd_sr)) {
            const ImageF input = io::load_image(sr_in);
            if (input.channels != 3)
                throw IoError("superres: input must be a color PNG");
            const msrn::MSRNModel model = msrn::load_weights(sr_weights);
            const ImageF out = msrn::msrn_forward(input, model);
            io::save_image(out, sr_out);
            std::printf("super-resolved %dx%d -> %dx%d (r=%d) -> %s\n", input.width,
                        input.height, out.width, out.height, model.scale_factor,
                        sr_out.c_str());
            return 0;
        }

        if (app.got_subcommand(cmd_metrics)) {
            if (metric_images.size() == 2) {
                const ImageF a = io::load_image(metric_images[0]);
                const ImageF b = io::load_image(metric_images[1]);
                std::printf("PSNR: %.4f dB\n", psnr(a, b));
                std::printf("SSIM: %.6f\n",
                            ssim(a, b, cfg.loss.dssim_kernel, cfg.loss.dssim_stride,
                                 cfg.loss.ssim_c1, cfg.loss.ssim_c2));
                return 0;
            }
            if (metrics_ckpt.empty() || metrics_cams.empty())
                throw CLI::ValidationError(
                    "metrics", "need two PNGs or --checkpoint with --cameras");
            const io::Checkpoint ckpt = io::load_checkpoint(metrics_ckpt);
            const auto views = load_views(metrics_cams);
            const MetricsTable table = evaluate(ckpt.set, views, cfg);
            std::printf("%-10s %-12s %s\n", "camera", "psnr", "ssim");
            for (const auto& row : table.rows)
                std::printf("%-10d %-12.4f %.6f\n", row.camera_id, row.psnr, row.ssim);
            std::printf("%-10s %-12.4f %.6f\n", "mean", table.mean_psnr, table.mean_ssim);
            return 0;
        }

        if (app.got_subcommand(cmd_var)) {
            const io::Checkpoint ckpt = io::load_checkpoint(var_ckpt);
            print_variance_table(sh_variance_report(ckpt.set));
            return 0;
        }

        std::cerr << app.help();
        return 1;
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

} // namespace gs
