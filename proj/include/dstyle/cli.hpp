#pragma once

#include "dstyle/eval.hpp"
#include "dstyle/guidance.hpp"
#include "dstyle/optimizer.hpp"

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

namespace dstyle {

/// Process exit codes.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitConfig = 2,
    kExitBackend = 3,
    kExitNumerical = 4,
};

struct OracleSettings {
    std::string target = "constant"; // constant | depth | image
    Rgb color{0.8F, 0.15F, 0.1F};
    Rgb near_color{0.1F, 0.1F, 0.3F};
    Rgb far_color{0.9F, 0.6F, 0.7F};
    std::filesystem::path image_path;
};

struct EvalSettings {
    int views = 36;
    std::filesystem::path distractor_file;
    std::filesystem::path ground_truth_dir;
    std::string embedder = "remote"; // remote | hash
    std::string embed_endpoint;      // defaults to the run endpoint
    bool lpips = false;
    std::string lpips_net = "alex";
    unsigned max_in_flight = 4;
};

/// Camera for `render` and for the summary fit of `stylize`.
struct CameraSettings {
    double radius = 1.5;
    double elevation = 25.0;
    double azimuth = 0.0;
    double fov_y_deg = 45.0;
};

/// The JSON config document. Relative paths are resolved against the
/// directory of the config file (or the working directory for flags).
struct RunConfig {
    std::filesystem::path mesh_path;
    std::string prompt;
    std::string backend = "oracle"; // oracle | remote | zero
    std::string endpoint;
    int resolution = 64;
    int iterations = 3000;
    double lr0 = 5e-4;
    double guidance_scale = 10.0;
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "out";
    int checkpoint_every = 500;
    std::filesystem::path checkpoint_path;
    int quadrature_count = 128;
    std::array<double, 2> view_radius{1.2, 1.8};
    std::array<double, 2> view_elevation{-10.0, 60.0};
    std::array<double, 2> view_azimuth{0.0, 360.0};
    OracleSettings oracle;
    EvalSettings eval;
    CameraSettings camera;
};

/// Unknown keys are rejected so that typos do not silently fall back to defaults.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

/// Command-line values; each one set replaces the config file value.
struct CliOverrides {
    std::optional<std::string> mesh;
    std::optional<std::string> prompt;
    std::optional<std::string> backend;
    std::optional<std::string> endpoint;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> resolution;
    std::optional<int> iterations;
    std::optional<std::string> checkpoint;
};

/// Precedence: flag, then config file, then `env_endpoint` (endpoint only), then defaults.
void apply_overrides(RunConfig& cfg, const CliOverrides& flags, const char* env_endpoint);

enum class Command { Stylize, Render, Eval, Health };

/// Checks everything the command needs before any file is written.
/// Throws ConfigError naming the field.
void validate_config(const RunConfig& cfg, Command cmd);

TrainConfig make_train_config(const RunConfig& cfg);
OracleConfig make_oracle_config(const RunConfig& cfg);
std::unique_ptr<GuidanceBackend> make_backend(const RunConfig& cfg);

void cmd_stylize(const RunConfig& cfg, std::ostream& out);
void cmd_render(const RunConfig& cfg, std::ostream& out);
MetricReport cmd_eval(const RunConfig& cfg, std::ostream& out);
void cmd_health(const RunConfig& cfg, std::ostream& out);

/// Parses arguments, runs one command and maps errors onto ExitCode.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace dstyle
