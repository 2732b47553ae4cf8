#include "pqmlab/scorer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pqmlab/error.hpp"
#include "pqmlab/rng.hpp"

namespace pqm {

std::string_view to_string(ScorerKind kind) { return kind == ScorerKind::linear ? "linear" : "mlp1"; }

ScorerKind parse_scorer_kind(std::string_view name) {
  if (name == "linear") return ScorerKind::linear;
  if (name == "mlp1") return ScorerKind::mlp1;
  throw ConfigError("unknown scorer kind '" + std::string(name) + "' (valid: linear, mlp1)");
}

ScorerModel ScorerModel::make_linear(int feature_dim) {
  if (feature_dim < 1) throw ValidationError("feature_dim", "must be positive");
  ScorerModel m;
  m.kind = ScorerKind::linear;
  m.feature_dim = feature_dim;
  m.params.assign(static_cast<std::size_t>(feature_dim) + 1, 0.0);
  return m;
}

ScorerModel ScorerModel::make_mlp1(int feature_dim, int hidden, std::uint64_t seed) {
  if (feature_dim < 1) throw ValidationError("feature_dim", "must be positive");
  if (hidden < 1) throw ValidationError("hidden", "must be positive");
  ScorerModel m;
  m.kind = ScorerKind::mlp1;
  m.feature_dim = feature_dim;
  m.hidden = hidden;
  m.params.assign(m.n_params(), 0.0);
  Rng rng(seed);
  const double in_scale = 1.0 / std::sqrt(static_cast<double>(feature_dim));
  const double out_scale = 1.0 / std::sqrt(static_cast<double>(hidden));
  const auto d = static_cast<std::size_t>(feature_dim);
  const auto h = static_cast<std::size_t>(hidden);
  for (std::size_t i = 0; i < h * d; ++i) m.params[i] = rng.uniform(-in_scale, in_scale);
  for (std::size_t j = 0; j < h; ++j) m.params[h * d + h + j] = rng.uniform(-out_scale, out_scale);
  return m;
}

std::size_t ScorerModel::n_params() const {
  const auto d = static_cast<std::size_t>(feature_dim);
  const auto h = static_cast<std::size_t>(hidden);
  return kind == ScorerKind::linear ? d + 1 : h * d + 2 * h + 1;
}

double ScorerModel::score(std::span<const double> x) const {
  const auto d = static_cast<std::size_t>(feature_dim);
  if (kind == ScorerKind::linear) {
    double s = params[d];
    for (std::size_t i = 0; i < d; ++i) s += params[i] * x[i];
    return s;
  }
  const auto h = static_cast<std::size_t>(hidden);
  const double* w1 = params.data();
  const double* b1 = w1 + h * d;
  const double* w2 = b1 + h;
  double s = w2[h];
  for (std::size_t j = 0; j < h; ++j) {
    double a = b1[j];
    for (std::size_t i = 0; i < d; ++i) a += w1[j * d + i] * x[i];
    s += w2[j] * std::tanh(a);
  }
  return s;
}

double ScorerModel::score_backward(std::span<const double> x, double weight,
                                   std::span<double> grad) const {
  const auto d = static_cast<std::size_t>(feature_dim);
  if (kind == ScorerKind::linear) {
    double s = params[d];
    for (std::size_t i = 0; i < d; ++i) {
      s += params[i] * x[i];
      grad[i] += weight * x[i];
    }
    grad[d] += weight;
    return s;
  }
  const auto h = static_cast<std::size_t>(hidden);
  const double* w1 = params.data();
  const double* b1 = w1 + h * d;
  const double* w2 = b1 + h;
  double s = w2[h];
  for (std::size_t j = 0; j < h; ++j) {
    double a = b1[j];
    for (std::size_t i = 0; i < d; ++i) a += w1[j * d + i] * x[i];
    const double z = std::tanh(a);
    s += w2[j] * z;
    const double delta = weight * w2[j] * (1.0 - z * z);
    for (std::size_t i = 0; i < d; ++i) grad[j * d + i] += delta * x[i];
    grad[h * d + j] += delta;
    grad[h * d + h + j] += weight * z;
  }
  grad[h * d + 2 * h] += weight;
  return s;
}

std::vector<double> score_steps(const ScorerModel& model, const Trajectory& traj) {
  std::vector<double> out;
  out.reserve(traj.steps.size());
  for (const Step& s : traj.steps) {
    if (static_cast<int>(s.features.size()) != model.feature_dim) {
      throw ValidationError("features", "trajectory " + traj.question_id + " has dimension " +
                                            std::to_string(s.features.size()) + ", scorer expects " +
                                            std::to_string(model.feature_dim));
    }
    out.push_back(model.score(s.features));
  }
  return out;
}

std::string checkpoint_to_string(const ScorerModel& model, const std::string& train_config_digest) {
  nlohmann::ordered_json j;
  j["schema_version"] = kCheckpointSchemaVersion;
  j["kind"] = to_string(model.kind);
  j["feature_dim"] = model.feature_dim;
  j["hidden"] = model.hidden;
  j["params"] = model.params;
  j["train_config_digest"] = train_config_digest;
  return j.dump(2) + "\n";
}

ScorerModel checkpoint_from_string(const std::string& text, const std::string& source_name,
                                   std::string* train_config_digest) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(source_name, 0, e.byte, e.what());
  }
  try {
    if (j.at("schema_version").get<int>() != kCheckpointSchemaVersion) {
      throw ValidationError("schema_version", "unsupported checkpoint version");
    }
    ScorerModel m;
    m.kind = parse_scorer_kind(j.at("kind").get<std::string>());
    m.feature_dim = j.at("feature_dim").get<int>();
    m.hidden = j.at("hidden").get<int>();
    m.params = j.at("params").get<std::vector<double>>();
    if (m.feature_dim < 1 || (m.kind == ScorerKind::mlp1 && m.hidden < 1)) {
      throw ValidationError("feature_dim", "invalid model shape");
    }
    if (m.params.size() != m.n_params()) {
      throw ValidationError("params", "expected " + std::to_string(m.n_params()) + " parameters, got " +
                                          std::to_string(m.params.size()));
    }
    if (train_config_digest) *train_config_digest = j.value("train_config_digest", "");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint", std::string(e.what()));
  }
}

void save_checkpoint(const ScorerModel& model, const std::filesystem::path& path,
                     const std::string& train_config_digest) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint " + path.string());
  f << checkpoint_to_string(model, train_config_digest);
  if (!f) throw IoError("write failed for " + path.string());
}

ScorerModel load_checkpoint(const std::filesystem::path& path, std::string* train_config_digest) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return checkpoint_from_string(ss.str(), path.string(), train_config_digest);
}

}  // namespace pqm
