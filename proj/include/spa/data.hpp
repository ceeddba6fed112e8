#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spa/numeric.hpp"

namespace spa {

enum class Domain { source, target };

inline constexpr int kUnlabeled = -1;

struct Dataset {
  Matrix features;
  std::vector<int> labels;  // class index or kUnlabeled
  Domain domain = Domain::source;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return features.rows(); }
  std::size_t dim() const noexcept { return features.cols(); }
  bool fully_labeled() const;
  /// Labels as class indices; throws if any sample is unlabeled.
  std::vector<std::size_t> class_labels() const;
  /// Rows by index; sample ids of the result are 0..indices.size()−1.
  Dataset subset(const std::vector<std::size_t>& indices) const;
  void validate() const;
};

/// Two interleaved half-circles (labels 0 and 1) with isotropic Gaussian
/// noise, rotated about the origin by `rotation_deg`.
Dataset gen_two_moons(std::size_t n, double noise, double rotation_deg, std::uint64_t seed,
                      Domain domain = Domain::source);

/// Gaussian class blobs around centers on a sphere of radius 5·spread; the
/// target copy is translated by `shift`.
std::pair<Dataset, Dataset> gen_blobs_shift(std::size_t n, std::size_t num_classes, std::size_t dim,
                                            const std::vector<double>& shift, double spread,
                                            std::uint64_t seed);

/// CSV with header `label,f0,...,f{d-1}`; label −1 marks unlabeled rows.
/// `num_classes` of 0 infers the class count from the largest label.
Dataset load_csv_features(const std::filesystem::path& path, Domain domain,
                          std::size_t num_classes = 0);
void save_csv_features(const Dataset& ds, const std::filesystem::path& path);

enum class SplitMode { transductive, inductive };

struct SplitSpec {
  SplitMode mode = SplitMode::transductive;
  double test_fraction = 0.5;
  std::uint64_t seed = 0;
};

/// Transductive: both halves are the input. Inductive: disjoint random split,
/// stratified by label when labels are known.
std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec);

/// Exactly `shots` indices per class, without replacement, sorted ascending.
std::vector<std::size_t> ssda_sample(const Dataset& ds, std::size_t shots, std::uint64_t seed);

/// Key/value dataset manifest (`key = value` per line, `#` comments).
struct Manifest {
  std::string name;
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  std::filesystem::path source;
  std::filesystem::path target;
  std::optional<std::filesystem::path> target_test;
  std::optional<std::string> generator;  // set for synthetic data

  /// Relative paths are resolved against the manifest's directory.
  static Manifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

}  // namespace spa
