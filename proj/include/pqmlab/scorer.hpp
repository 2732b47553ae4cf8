#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pqmlab/trajectory.hpp"

namespace pqm {

enum class ScorerKind { linear, mlp1 };

std::string_view to_string(ScorerKind kind);
ScorerKind parse_scorer_kind(std::string_view name);

/// Value head mapping a step's feature vector to a raw Q estimate.
///
/// Parameter layout:
///   linear: w[0..d), b
///   mlp1:   W1[h][d] row-major, b1[h], w2[h], b2   (tanh hidden layer)
struct ScorerModel {
  ScorerKind kind = ScorerKind::linear;
  int feature_dim = 0;
  int hidden = 0;
  std::vector<double> params;

  /// Zero weights and bias.
  static ScorerModel make_linear(int feature_dim);
  /// Hidden weights uniform in +-1/sqrt(d), head weights uniform in
  /// +-1/sqrt(h), biases zero.
  static ScorerModel make_mlp1(int feature_dim, int hidden, std::uint64_t seed);

  std::size_t n_params() const;
  double score(std::span<const double> features) const;
  /// Returns score(features) and adds weight * d score / d params to `grad`.
  double score_backward(std::span<const double> features, double weight,
                        std::span<double> grad) const;

  bool operator==(const ScorerModel&) const = default;
};

/// One raw score per step. Throws ValidationError on a feature-dimension
/// mismatch.
std::vector<double> score_steps(const ScorerModel& model, const Trajectory& traj);

inline constexpr int kCheckpointSchemaVersion = 1;

void save_checkpoint(const ScorerModel& model, const std::filesystem::path& path,
                     const std::string& train_config_digest = "");
/// Throws ParseError (with byte offset) on a corrupt file and
/// ValidationError on a schema mismatch.
ScorerModel load_checkpoint(const std::filesystem::path& path, std::string* train_config_digest = nullptr);

std::string checkpoint_to_string(const ScorerModel& model, const std::string& train_config_digest);
ScorerModel checkpoint_from_string(const std::string& text, const std::string& source_name,
                                   std::string* train_config_digest = nullptr);

}  // namespace pqm
