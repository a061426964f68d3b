#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "bae/architecture.hpp"
#include "bae/boosted.hpp"
#include "bae/clustering.hpp"
#include "bae/data.hpp"

namespace bae::cli {

/// Invalid configuration; the message names the offending field.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum ExitCode : int { ok = 0, validation_error = 1, runtime_failure = 2 };

/// Command-line values that take precedence over the config file.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> preset;
    std::optional<std::string> model;  // eval commands: reuse a saved model
    bool desk_scale = false;
};

/// Parses one layer string: dense(in,out), conv2d(in,out,k[,stride[,pad]]),
/// maxpool2x2, upsample2x2, relu, leaky_relu[(alpha)], sigmoid, reshape[d0,d1,...].
LayerSpec parse_layer(const std::string& text);

/// Fills every default, applies overrides and desk-scale, and checks field
/// types, ranges and referenced files. The result is what reports echo.
nlohmann::json resolve_config(const nlohmann::json& user, const Overrides& overrides);
nlohmann::json read_config_file(const std::string& path);

/// Typed views of a resolved config.
Dataset load_dataset(const nlohmann::json& resolved);
/// Separate evaluation data when the config names test files, else nullopt.
std::optional<Dataset> load_test_dataset(const nlohmann::json& resolved);
Architecture build_architecture(const nlohmann::json& resolved, const Shape& sample_shape);
BoostConfig boost_config(const nlohmann::json& resolved);
SingleConfig single_config(const nlohmann::json& resolved);
KMeansConfig kmeans_config(const nlohmann::json& resolved, std::size_t default_k);

/// Subcommands; each writes its artifacts under resolved["out"] and returns an exit code.
int cmd_train_boosted(const nlohmann::json& resolved, std::ostream& log);
int cmd_train_single(const nlohmann::json& resolved, std::ostream& log);
int cmd_eval_anomaly(const nlohmann::json& resolved, const std::optional<std::string>& model_path, std::ostream& log);
int cmd_eval_cluster(const nlohmann::json& resolved, const std::optional<std::string>& model_path, std::ostream& log);
int cmd_gradcheck(std::uint64_t seed, std::size_t configs_per_kind, const std::optional<std::string>& out,
                  std::ostream& log);

/// Entry point shared by the binary and tests: parses argv, runs the
/// subcommand, and maps exceptions to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bae::cli
