#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spa/data.hpp"
#include "spa/error.hpp"
#include "spa/trainer.hpp"

namespace spa::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kDivergence = 3 };

ExitCode exit_code_for(ErrorKind kind);

/// Synthetic dataset parameters shared by gen-data and generator-backed training.
struct GeneratorParams {
  std::string kind = "two-moons";  // two-moons | blobs
  std::size_t n = 600;
  double noise = 0.1;
  double rotation = 45.0;
  std::size_t classes = 3;
  std::size_t dim = 8;
  double shift = 2.0;  // length of the target translation along the all-ones diagonal
  double spread = 1.0;
  std::uint64_t seed = 0;  // source uses seed, target seed + 1

  void validate() const;
  std::string describe() const;
};

/// (source, target), both labeled.
std::pair<Dataset, Dataset> generate(const GeneratorParams& params);

/// Everything `train` accepts. Keys in config files and flags mirror the
/// field names; flags use dashes in place of underscores.
struct RunConfig {
  TrainConfig train;
  std::filesystem::path data;  // manifest; empty selects `generator`
  std::string generator;       // empty, two-moons or blobs
  GeneratorParams gen;
  std::string architecture = "auto";  // auto | synthetic | feature
  SplitMode split = SplitMode::transductive;
  double test_fraction = 0.5;
  std::uint64_t split_seed = 0;
  std::size_t ssda_shots = 0;
  std::vector<std::uint64_t> seeds;  // empty runs train.seed only
  std::filesystem::path out;

  void validate() const;
};

/// Sorted key list of every RunConfig field.
std::vector<std::string> run_config_keys();

/// Applies one `key = value` entry; throws config naming the key on failure.
void set_run_config_value(RunConfig& cfg, std::string_view key, std::string_view value);

/// Canonical `key = value` text of every field, in run_config_keys() order.
std::string run_config_text(const RunConfig& cfg);

/// Hash of the config text with the output directory blanked.
std::string run_config_fingerprint(const RunConfig& cfg);

/// Defaults, then the file (if any), then `overrides` in order.
RunConfig resolve_run_config(const std::filesystem::path& config_file,
                             const std::vector<std::pair<std::string, std::string>>& overrides);

/// "0..4" or "0,2,7".
std::vector<std::uint64_t> parse_seed_list(std::string_view text);

/// Full command line without the program name. Never throws; returns an ExitCode.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spa::cli
