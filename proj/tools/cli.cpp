#include "dstyle/cli.hpp"

#include "dstyle/errors.hpp"
#include "dstyle/image_io.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <chrono>
#include <fstream>
#include <set>

namespace fs = std::filesystem;

namespace dstyle {

namespace {

/// Typed access to one JSON object that remembers which keys were read.
class ObjectReader {
public:
    ObjectReader(const nlohmann::json& j, std::string prefix, fs::path base)
        : j_(j), prefix_(std::move(prefix)), base_(std::move(base)) {
        if (!j_.is_object()) {
            throw ConfigError(fmt::format("{}: must be a JSON object", prefix_.empty() ? "config" : prefix_));
        }
    }

    std::string name(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

    template <class T>
    void get(const std::string& key, T& dst) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) {
            return;
        }
        try {
            dst = it->template get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(fmt::format("{}: has the wrong type ({})", name(key), it->dump()));
        }
    }

    void path(const std::string& key, fs::path& dst) {
        std::string s;
        get(key, s);
        if (!s.empty()) {
            dst = resolve(s);
        }
    }

    fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : (base_ / p).lexically_normal(); }

    std::optional<ObjectReader> object(const std::string& key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) {
            return std::nullopt;
        }
        return ObjectReader(*it, name(key), base_);
    }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!seen_.contains(item.key())) {
                throw ConfigError(fmt::format("{}: unknown key", name(item.key())));
            }
        }
    }

private:
    const nlohmann::json& j_;
    std::string prefix_;
    fs::path base_;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& field, const std::string& why) {
    if (!ok) {
        throw ConfigError(fmt::format("{}: {}", field, why));
    }
}

void require_file(const fs::path& p, const std::string& field) {
    require(!p.empty(), field, "is required");
    require(fs::is_regular_file(p), field, fmt::format("file not found: {}", p.string()));
}

void require_range(const std::array<double, 2>& r, const std::string& field) {
    require(std::isfinite(r[0]) && std::isfinite(r[1]) && r[0] <= r[1], field, "must be [lo, hi] with lo <= hi");
}

Mesh load_scene_mesh(const RunConfig& cfg) { return normalize_mesh(load_obj(cfg.mesh_path)); }

ShadingConfig eval_shading(const RunConfig& cfg) {
    ShadingConfig s;
    s.quadrature_count = cfg.quadrature_count;
    return s;
}

Camera settings_camera(const CameraSettings& c, int resolution) {
    return orbit_camera(c.radius, c.elevation, c.azimuth, c.fov_y_deg, resolution, resolution);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw ConfigError(fmt::format("cannot write {}", path.string()));
    }
    f << text;
}

std::unique_ptr<EmbeddingClient> make_embedder(const RunConfig& cfg) {
    if (cfg.eval.embedder == "hash") {
        return std::make_unique<HashEmbeddingClient>();
    }
    return std::make_unique<RemoteEmbeddingClient>(cfg.eval.embed_endpoint.empty() ? cfg.endpoint
                                                                                    : cfg.eval.embed_endpoint);
}

} // namespace

RunConfig run_config_from_json(const nlohmann::json& j, const fs::path& base_dir) {
    RunConfig cfg;
    ObjectReader r(j, "", base_dir);
    r.path("mesh_path", cfg.mesh_path);
    r.get("prompt", cfg.prompt);
    r.get("backend", cfg.backend);
    r.get("endpoint", cfg.endpoint);
    r.get("resolution", cfg.resolution);
    r.get("iterations", cfg.iterations);
    r.get("lr0", cfg.lr0);
    r.get("guidance_scale", cfg.guidance_scale);
    r.get("seed", cfg.seed);
    r.path("output_dir", cfg.output_dir);
    if (!j.contains("output_dir")) {
        cfg.output_dir = r.resolve(cfg.output_dir);
    }
    r.get("checkpoint_every", cfg.checkpoint_every);
    r.path("checkpoint_path", cfg.checkpoint_path);
    r.get("quadrature_count", cfg.quadrature_count);
    if (auto v = r.object("views")) {
        v->get("radius", cfg.view_radius);
        v->get("elevation", cfg.view_elevation);
        v->get("azimuth", cfg.view_azimuth);
        v->finish();
    }
    if (auto o = r.object("oracle")) {
        o->get("target", cfg.oracle.target);
        o->get("color", cfg.oracle.color);
        o->get("near_color", cfg.oracle.near_color);
        o->get("far_color", cfg.oracle.far_color);
        o->path("image_path", cfg.oracle.image_path);
        o->finish();
    }
    if (auto e = r.object("eval")) {
        e->get("views", cfg.eval.views);
        e->path("distractor_file", cfg.eval.distractor_file);
        e->path("ground_truth_dir", cfg.eval.ground_truth_dir);
        e->get("embedder", cfg.eval.embedder);
        e->get("embed_endpoint", cfg.eval.embed_endpoint);
        e->get("lpips", cfg.eval.lpips);
        e->get("lpips_net", cfg.eval.lpips_net);
        e->get("max_in_flight", cfg.eval.max_in_flight);
        e->finish();
    }
    if (auto c = r.object("camera")) {
        c->get("radius", cfg.camera.radius);
        c->get("elevation", cfg.camera.elevation);
        c->get("azimuth", cfg.camera.azimuth);
        c->get("fov_y_deg", cfg.camera.fov_y_deg);
        c->finish();
    }
    r.finish();
    return cfg;
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(fmt::format("config: cannot open {}", path.string()));
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(fmt::format("config: {} is not valid JSON ({})", path.string(), e.what()));
    }
    return run_config_from_json(j, fs::absolute(path).parent_path());
}

void apply_overrides(RunConfig& cfg, const CliOverrides& flags, const char* env_endpoint) {
    const fs::path cwd = fs::current_path();
    auto abs = [&](const std::string& p) { return (cwd / p).lexically_normal(); };
    if (flags.mesh) cfg.mesh_path = abs(*flags.mesh);
    if (flags.prompt) cfg.prompt = *flags.prompt;
    if (flags.backend) cfg.backend = *flags.backend;
    if (flags.endpoint) cfg.endpoint = *flags.endpoint;
    if (flags.seed) cfg.seed = *flags.seed;
    if (flags.out) cfg.output_dir = abs(*flags.out);
    if (flags.resolution) cfg.resolution = *flags.resolution;
    if (flags.iterations) cfg.iterations = *flags.iterations;
    if (flags.checkpoint) cfg.checkpoint_path = abs(*flags.checkpoint);
    if (cfg.endpoint.empty() && env_endpoint != nullptr) {
        cfg.endpoint = env_endpoint;
    }
}

TrainConfig make_train_config(const RunConfig& cfg) {
    TrainConfig t;
    t.iterations = cfg.iterations;
    t.lr0 = cfg.lr0;
    t.guidance_scale = cfg.guidance_scale;
    t.resolution = cfg.resolution;
    t.seed = cfg.seed;
    t.checkpoint_every = cfg.checkpoint_every;
    t.views.radius_range = cfg.view_radius;
    t.views.elevation_range = cfg.view_elevation;
    t.views.azimuth_range = cfg.view_azimuth;
    t.views.fov_y_deg = cfg.camera.fov_y_deg;
    t.views.width = cfg.resolution;
    t.views.height = cfg.resolution;
    t.shading.quadrature_count = cfg.quadrature_count;
    return t;
}

OracleConfig make_oracle_config(const RunConfig& cfg) {
    OracleConfig o;
    o.color = cfg.oracle.color;
    o.near_color = cfg.oracle.near_color;
    o.far_color = cfg.oracle.far_color;
    if (cfg.oracle.target == "constant") {
        o.kind = OracleConfig::Kind::Constant;
    } else if (cfg.oracle.target == "depth") {
        o.kind = OracleConfig::Kind::DepthShaded;
    } else if (cfg.oracle.target == "image") {
        o.kind = OracleConfig::Kind::Image;
        require_file(cfg.oracle.image_path, "oracle.image_path");
        const Image8 img = read_png(cfg.oracle.image_path);
        require(img.width == cfg.resolution && img.height == cfg.resolution && img.channels == 3,
                "oracle.image_path",
                fmt::format("must be a {}x{} RGB PNG, got {}x{}", cfg.resolution, cfg.resolution, img.width,
                            img.height));
        o.image = dequantize_rgb(img);
        o.width = img.width;
        o.height = img.height;
    } else {
        throw ConfigError(fmt::format("oracle.target: '{}' is not constant, depth or image", cfg.oracle.target));
    }
    return o;
}

std::unique_ptr<GuidanceBackend> make_backend(const RunConfig& cfg) {
    if (cfg.backend == "zero") {
        return std::make_unique<ZeroBackend>();
    }
    if (cfg.backend == "oracle") {
        return std::make_unique<OracleBackend>(make_oracle_config(cfg));
    }
    if (cfg.backend == "remote") {
        return std::make_unique<RemoteBackend>(cfg.endpoint);
    }
    throw ConfigError(fmt::format("backend: '{}' is not oracle, remote or zero", cfg.backend));
}

void validate_config(const RunConfig& cfg, Command cmd) {
    require(cfg.resolution > 0 && cfg.resolution % 8 == 0, "resolution", "must be a positive multiple of 8");
    require(cfg.quadrature_count >= 8, "quadrature_count", "must be >= 8");
    require(cfg.backend == "oracle" || cfg.backend == "remote" || cfg.backend == "zero", "backend",
            fmt::format("'{}' is not oracle, remote or zero", cfg.backend));
    if (cfg.backend == "remote" && cmd != Command::Render) {
        require(!cfg.endpoint.empty(), "endpoint", "is required for the remote backend (or set STYLE_ENDPOINT)");
        parse_endpoint(cfg.endpoint);
    }
    if (cmd == Command::Health) {
        return;
    }
    require_file(cfg.mesh_path, "mesh_path");
    require(!fs::exists(cfg.output_dir) || fs::is_directory(cfg.output_dir), "output_dir",
            fmt::format("{} exists and is not a directory", cfg.output_dir.string()));
    const auto& c = cfg.camera;
    require(c.radius > 0.0 && std::isfinite(c.radius), "camera.radius", "must be > 0");
    require(c.fov_y_deg > 0.0 && c.fov_y_deg < 180.0, "camera.fov_y_deg", "must be in (0, 180)");
    require(std::isfinite(c.elevation) && std::abs(c.elevation) < 90.0, "camera.elevation",
            "must be in (-90, 90)");
    require(std::isfinite(c.azimuth), "camera.azimuth", "must be finite");

    switch (cmd) {
    case Command::Stylize: {
        require(!cfg.prompt.empty(), "prompt", "is required");
        require(cfg.iterations >= 0, "iterations", "must be >= 0");
        require_range(cfg.view_radius, "views.radius");
        require_range(cfg.view_elevation, "views.elevation");
        require_range(cfg.view_azimuth, "views.azimuth");
        make_train_config(cfg).validate();
        if (cfg.backend == "oracle") {
            make_oracle_config(cfg);
        }
        break;
    }
    case Command::Render:
        require_file(cfg.checkpoint_path, "checkpoint_path");
        break;
    case Command::Eval: {
        require_file(cfg.checkpoint_path, "checkpoint_path");
        require(!cfg.prompt.empty(), "prompt", "is required");
        require(cfg.eval.views >= 1, "eval.views", "must be >= 1");
        require(cfg.eval.max_in_flight >= 1, "eval.max_in_flight", "must be >= 1");
        require_file(cfg.eval.distractor_file, "eval.distractor_file");
        load_retrieval_set(cfg.prompt, cfg.eval.distractor_file);
        require(cfg.eval.embedder == "remote" || cfg.eval.embedder == "hash", "eval.embedder",
                fmt::format("'{}' is not remote or hash", cfg.eval.embedder));
        const std::string embed = cfg.eval.embed_endpoint.empty() ? cfg.endpoint : cfg.eval.embed_endpoint;
        if (cfg.eval.embedder == "remote") {
            require(!embed.empty(), "eval.embed_endpoint", "is required for the remote embedder");
            parse_endpoint(embed);
        }
        if (!cfg.eval.ground_truth_dir.empty()) {
            require(fs::is_directory(cfg.eval.ground_truth_dir), "eval.ground_truth_dir",
                    fmt::format("not a directory: {}", cfg.eval.ground_truth_dir.string()));
        }
        if (cfg.eval.lpips) {
            require(!cfg.eval.ground_truth_dir.empty(), "eval.lpips", "requires eval.ground_truth_dir");
            require(!embed.empty(), "eval.lpips", "requires an endpoint");
            require(cfg.eval.lpips_net == "alex" || cfg.eval.lpips_net == "vgg", "eval.lpips_net",
                    "must be alex or vgg");
        }
        break;
    }
    case Command::Health:
        break;
    }
}

void cmd_stylize(const RunConfig& cfg, std::ostream& out) {
    validate_config(cfg, Command::Stylize);
    const Mesh mesh = load_scene_mesh(cfg);
    const auto backend = make_backend(cfg);
    const TrainConfig tcfg = make_train_config(cfg);

    fs::create_directories(cfg.output_dir);
    std::ofstream report(cfg.output_dir / "report.jsonl", std::ios::trunc);
    if (!report) {
        throw ConfigError(fmt::format("output_dir: cannot write {}", (cfg.output_dir / "report.jsonl").string()));
    }
    TrainCallbacks callbacks;
    callbacks.on_iteration = [&](const IterationRecord& rec) { report << to_json(rec).dump() << '\n'; };
    callbacks.on_checkpoint = [&](int iter, const AppearanceFields<float>& fields) {
        save_checkpoint(fields, cfg.output_dir / fmt::format("checkpoint_{:06d}.ckpt", iter));
        report.flush();
    };
    const auto start = std::chrono::steady_clock::now();
    const TrainResult result = train(mesh, cfg.prompt, tcfg, *backend, callbacks);
    const double wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.close();

    const fs::path final_ckpt = cfg.output_dir / "final.ckpt";
    save_checkpoint(result.fields, final_ckpt);

    const Bvh bvh = build_bvh(mesh);
    const ShadingConfig shading = eval_shading(cfg);
    std::vector<Image8> tiles;
    for (double az : {0.0, 90.0, 180.0, 270.0}) {
        CameraSettings c = cfg.camera;
        c.azimuth += az;
        const auto view = render_view(mesh, bvh, result.fields, settings_camera(c, cfg.resolution), shading).view;
        tiles.push_back(quantize_rgb(view.image, view.width, view.height));
    }
    write_png(cfg.output_dir / "preview.png", contact_sheet(tiles, 2));

    nlohmann::json summary = {
        {"prompt", cfg.prompt},
        {"backend", cfg.backend},
        {"iterations", cfg.iterations},
        {"seed", cfg.seed},
        {"final_lr", cfg.iterations > 0 ? lr_at(cfg.iterations - 1, tcfg) : tcfg.lr0},
        {"wall_s", wall_s},
        {"final_checkpoint", final_ckpt.filename().string()},
        {"parameters", result.fields.layout.param_count},
    };
    if (cfg.backend == "oracle") {
        const auto view = render_view(mesh, bvh, result.fields, settings_camera(cfg.camera, cfg.resolution), shading);
        const OracleFit fit = oracle_fit(view.view, make_oracle_config(cfg));
        summary["final_mse"] = fit.mse;
        summary["depth_correlation"] = fit.depth_correlation;
        summary["fit_pixels"] = fit.pixels;
    }
    write_text(cfg.output_dir / "summary.json", summary.dump(2) + "\n");
    fmt::print(out, "wrote {} ({} iterations, {:.1f} s)\n", final_ckpt.string(), cfg.iterations, wall_s);
    if (summary.contains("final_mse")) {
        fmt::print(out, "final_mse {:.6g} depth_correlation {:.4f}\n", summary["final_mse"].get<double>(),
                   summary["depth_correlation"].get<double>());
    }
}

void cmd_render(const RunConfig& cfg, std::ostream& out) {
    validate_config(cfg, Command::Render);
    const Mesh mesh = load_scene_mesh(cfg);
    const AppearanceFields<float> fields = load_checkpoint(cfg.checkpoint_path, FieldsLayout{});
    const Camera cam = settings_camera(cfg.camera, cfg.resolution);
    const auto result = render_view(mesh, build_bvh(mesh), fields, cam, eval_shading(cfg));
    const auto& v = result.view;

    fs::create_directories(cfg.output_dir);
    write_png(cfg.output_dir / "image.png", quantize_rgb(v.image, v.width, v.height));
    write_pfm(cfg.output_dir / "depth.pfm", v.depth, v.width, v.height);
    Image8 mask{v.width, v.height, 1, std::vector<std::uint8_t>(v.mask.size())};
    for (std::size_t i = 0; i < v.mask.size(); ++i) {
        mask.pixels[i] = v.mask[i] ? 255 : 0;
    }
    write_png(cfg.output_dir / "mask.png", mask);
    fmt::print(out, "wrote image.png, depth.pfm, mask.png to {} ({} hit pixels)\n", cfg.output_dir.string(),
               v.hit_count());
}

MetricReport cmd_eval(const RunConfig& cfg, std::ostream& out) {
    validate_config(cfg, Command::Eval);
    const RetrievalSet set = load_retrieval_set(cfg.prompt, cfg.eval.distractor_file);
    const Mesh mesh = load_scene_mesh(cfg);
    const AppearanceFields<float> fields = load_checkpoint(cfg.checkpoint_path, FieldsLayout{});
    const auto embedder = make_embedder(cfg);
    std::unique_ptr<LpipsClient> lpips;
    if (cfg.eval.lpips) {
        lpips = std::make_unique<RemoteLpipsClient>(
            cfg.eval.embed_endpoint.empty() ? cfg.endpoint : cfg.eval.embed_endpoint, cfg.eval.lpips_net);
    }
    EvalOptions opts;
    opts.views = cfg.eval.views;
    opts.resolution = cfg.resolution;
    opts.fov_y_deg = cfg.camera.fov_y_deg;
    opts.shading = eval_shading(cfg);
    if (!cfg.eval.ground_truth_dir.empty()) {
        opts.ground_truth_dir = cfg.eval.ground_truth_dir;
    }
    opts.lpips = cfg.eval.lpips;
    opts.max_in_flight = cfg.eval.max_in_flight;
    const MetricReport report = evaluate(mesh, fields, set, *embedder, lpips.get(), opts);

    fs::create_directories(cfg.output_dir);
    write_text(cfg.output_dir / "metrics.json", report.to_json().dump(2) + "\n");
    fmt::print(out, "r_precision {:.4f}\nimage_text_score {:.4f}\n", report.r_precision, report.image_text_score);
    if (report.image_image_score) {
        fmt::print(out, "image_image_score {:.4f}\n", *report.image_image_score);
    }
    if (report.lpips) {
        fmt::print(out, "lpips {:.4f}\n", *report.lpips);
    }
    fmt::print(out, "candidates {}\nviews {}\n", report.candidates, report.views);
    return report;
}

void cmd_health(const RunConfig& cfg, std::ostream& out) {
    validate_config(cfg, Command::Health);
    const auto backend = make_backend(cfg);
    const HealthStatus status = health_check(*backend);
    fmt::print(out, "ok {} info \"{}\" latency_ms {:.1f}\n", status.ok, status.info, status.latency_ms);
    if (!status.ok) {
        throw BackendError(fmt::format("backend '{}' reports unhealthy: {}", cfg.backend, status.info));
    }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Text-driven mesh stylization with depth-aware score distillation"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    CliOverrides flags;
    app.add_option("--config", config_path, "JSON run config");
    app.add_option("--mesh", flags.mesh, "OBJ mesh (overrides mesh_path)");
    app.add_option("--prompt", flags.prompt, "Text prompt");
    app.add_option("--backend", flags.backend, "oracle | remote | zero");
    app.add_option("--endpoint", flags.endpoint, "Guidance service URL (fallback: STYLE_ENDPOINT)");
    app.add_option("--seed", flags.seed, "Random seed");
    app.add_option("--out", flags.out, "Output directory");
    app.add_option("--resolution", flags.resolution, "Render resolution (multiple of 8)");
    app.add_option("--iters", flags.iterations, "Training iterations");
    app.add_option("--checkpoint", flags.checkpoint, "Checkpoint for render / eval");
    std::optional<double> radius;
    std::optional<double> elevation;
    std::optional<double> azimuth;
    app.add_option("--radius", radius, "Camera distance for render");
    app.add_option("--elevation", elevation, "Camera elevation in degrees for render");
    app.add_option("--azimuth", azimuth, "Camera azimuth in degrees for render");

    auto* stylize = app.add_subcommand("stylize", "Optimize appearance fields for a prompt");
    auto* render = app.add_subcommand("render", "Render image, depth and mask from a checkpoint");
    auto* eval = app.add_subcommand("eval", "Score a checkpoint over the evaluation views");
    auto* health = app.add_subcommand("health", "Probe the guidance backend");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
        if (config_path.empty()) {
            cfg.output_dir = fs::current_path() / cfg.output_dir;
        }
        apply_overrides(cfg, flags, std::getenv("STYLE_ENDPOINT"));
        if (radius) cfg.camera.radius = *radius;
        if (elevation) cfg.camera.elevation = *elevation;
        if (azimuth) cfg.camera.azimuth = *azimuth;

        if (stylize->parsed()) {
            cmd_stylize(cfg, out);
        } else if (render->parsed()) {
            cmd_render(cfg, out);
        } else if (eval->parsed()) {
            cmd_eval(cfg, out);
        } else if (health->parsed()) {
            cmd_health(cfg, out);
        }
        return kExitOk;
    } catch (const ConfigError& e) {
        fmt::print(err, "config error: {}\n", e.what());
        return kExitConfig;
    } catch (const ShapeError& e) {
        fmt::print(err, "config error: {}\n", e.what());
        return kExitConfig;
    } catch (const BackendError& e) {
        fmt::print(err, "backend error: {}\n", e.what());
        return kExitBackend;
    } catch (const NumericalError& e) {
        fmt::print(err, "numerical failure: {}\n", e.what());
        return kExitNumerical;
    } catch (const std::exception& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kExitFailure;
    }
}

} // namespace dstyle
