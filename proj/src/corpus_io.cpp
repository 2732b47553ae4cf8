#include "pqmlab/corpus_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "pqmlab/error.hpp"

namespace pqm {

namespace {

using ojson = nlohmann::ordered_json;
using json = nlohmann::json;

// JSON has no representation for non-finite numbers; oracle scores can be
// +-inf, so those are written as strings.
ojson real_to_json(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "NaN";
  return v > 0 ? "Infinity" : "-Infinity";
}

double real_from_json(const json& j, const std::string& field) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (s == "Infinity") return std::numeric_limits<double>::infinity();
    if (s == "-Infinity") return -std::numeric_limits<double>::infinity();
    if (s == "NaN") return std::numeric_limits<double>::quiet_NaN();
  }
  throw ValidationError(field, "expected a number");
}

const json& require(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw ValidationError(key, "missing field");
  return *it;
}

template <typename T>
T get_as(const json& j, const std::string& field) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ValidationError(field, "wrong type");
  }
}

std::vector<double> reals_from_json(const json& j, const std::string& field) {
  if (!j.is_array()) throw ValidationError(field, "expected an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(real_from_json(j[i], field + "[" + std::to_string(i) + "]"));
  }
  return out;
}

ojson reals_to_json(const std::vector<double>& v) {
  ojson arr = ojson::array();
  for (double x : v) arr.push_back(real_to_json(x));
  return arr;
}

}  // namespace

ojson record_to_json(const CorpusRecord& record) {
  const Trajectory& traj = record.trajectory;
  ojson j;
  j["schema_version"] = kCorpusSchemaVersion;
  j["question_id"] = traj.question_id;
  j["gold_answer"] = traj.gold_answer;
  j["final_answer"] = traj.final_answer;
  ojson steps = ojson::array();
  for (const Step& s : traj.steps) {
    ojson js;
    js["index"] = s.index;
    js["features"] = reals_to_json(s.features);
    if (s.latent_correct) js["latent_correct"] = *s.latent_correct;
    steps.push_back(std::move(js));
  }
  j["steps"] = std::move(steps);
  ojson labels = ojson::array();
  for (bool b : record.labels.labels()) labels.push_back(b);
  j["labels"] = std::move(labels);
  if (record.labels.first_error()) j["first_error"] = *record.labels.first_error();
  if (record.scored) {
    j["step_scores"] = reals_to_json(record.scored->step_scores);
    j["trajectory_score"] = real_to_json(record.scored->trajectory_score);
    j["trajectory_ref"] = record.scored->trajectory_ref;
  }
  if (record.annotation) {
    j["soft_labels"] = reals_to_json(record.annotation->soft_labels);
    j["n_success"] = record.annotation->n_success;
    j["k"] = record.annotation->k;
  }
  if (traj.policy) {
    j["policy"] = {{"alpha", traj.policy->alpha}, {"beta", traj.policy->beta}};
  }
  return j;
}

CorpusRecord record_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("record", "expected a JSON object");
  const int version = get_as<int>(require(j, "schema_version"), "schema_version");
  if (version != kCorpusSchemaVersion) {
    throw ValidationError("schema_version", "unsupported version " + std::to_string(version));
  }
  CorpusRecord rec;
  Trajectory& traj = rec.trajectory;
  traj.question_id = get_as<std::string>(require(j, "question_id"), "question_id");
  traj.gold_answer = get_as<AnswerToken>(require(j, "gold_answer"), "gold_answer");
  traj.final_answer = get_as<AnswerToken>(require(j, "final_answer"), "final_answer");
  const json& steps = require(j, "steps");
  if (!steps.is_array()) throw ValidationError("steps", "expected an array");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const std::string prefix = "steps[" + std::to_string(i) + "]";
    Step s;
    s.index = get_as<int>(require(steps[i], "index"), prefix + ".index");
    s.features = reals_from_json(require(steps[i], "features"), prefix + ".features");
    if (const auto it = steps[i].find("latent_correct"); it != steps[i].end()) {
      s.latent_correct = get_as<bool>(*it, prefix + ".latent_correct");
    }
    traj.steps.push_back(std::move(s));
  }
  if (const auto it = j.find("policy"); it != j.end()) {
    traj.policy = PolicyTag{get_as<double>(require(*it, "alpha"), "policy.alpha"),
                            get_as<double>(require(*it, "beta"), "policy.beta")};
  }
  traj.validate();
  const std::size_t horizon = traj.steps.size();

  auto labels = get_as<std::vector<bool>>(require(j, "labels"), "labels");
  if (labels.size() != horizon) {
    throw ValidationError("labels", "length " + std::to_string(labels.size()) +
                                        " does not match " + std::to_string(horizon) + " steps");
  }
  std::optional<int> first_error;
  if (const auto it = j.find("first_error"); it != j.end()) {
    first_error = get_as<int>(*it, "first_error");
  }
  rec.labels = StepLabels::from_stored(std::move(labels), first_error);

  if (const auto it = j.find("step_scores"); it != j.end()) {
    ScoredTrajectory scored;
    scored.step_scores = reals_from_json(*it, "step_scores");
    if (scored.step_scores.size() != horizon) {
      throw ValidationError("step_scores", "length does not match steps");
    }
    scored.trajectory_score = real_from_json(require(j, "trajectory_score"), "trajectory_score");
    scored.trajectory_ref = get_as<std::string>(require(j, "trajectory_ref"), "trajectory_ref");
    rec.scored = std::move(scored);
  }
  if (const auto it = j.find("soft_labels"); it != j.end()) {
    AnnotationExtension ext;
    ext.soft_labels = reals_from_json(*it, "soft_labels");
    ext.n_success = get_as<std::vector<int>>(require(j, "n_success"), "n_success");
    ext.k = get_as<int>(require(j, "k"), "k");
    if (ext.k < 1) throw ValidationError("k", "must be positive");
    if (ext.soft_labels.size() != horizon || ext.n_success.size() != horizon) {
      throw ValidationError("soft_labels", "length does not match steps");
    }
    for (std::size_t i = 0; i < horizon; ++i) {
      if (ext.n_success[i] < 0 || ext.n_success[i] > ext.k ||
          ext.soft_labels[i] != static_cast<double>(ext.n_success[i]) / ext.k) {
        throw ValidationError("soft_labels[" + std::to_string(i) + "]",
                              "inconsistent with n_success / k");
      }
    }
    rec.annotation = std::move(ext);
  }
  return rec;
}

namespace {

void check_feature_dims(const Corpus& corpus) {
  if (corpus.empty()) return;
  const std::size_t dim = corpus.front().trajectory.feature_dim();
  for (const auto& rec : corpus) {
    if (rec.trajectory.feature_dim() != dim) {
      throw ValidationError("features", "trajectory " + rec.trajectory.question_id +
                                            " has feature dimension " +
                                            std::to_string(rec.trajectory.feature_dim()) +
                                            ", corpus uses " + std::to_string(dim));
    }
  }
}

}  // namespace

std::string serialize_corpus_to_string(const Corpus& corpus) {
  check_feature_dims(corpus);
  std::string out;
  for (const auto& rec : corpus) {
    rec.trajectory.validate();
    out += record_to_json(rec).dump();
    out += '\n';
  }
  return out;
}

std::size_t serialize_corpus(const Corpus& corpus, const std::filesystem::path& destination) {
  const std::string text = serialize_corpus_to_string(corpus);
  std::ofstream f(destination, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write corpus to " + destination.string());
  f << text;
  if (!f) throw IoError("write failed for " + destination.string());
  return corpus.size();
}

Corpus parse_corpus_string(const std::string& text, const std::string& source_name) {
  Corpus corpus;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(source_name, line_no, 0, e.what());
    }
    try {
      corpus.push_back(record_from_json(j));
    } catch (const ValidationError& e) {
      throw ValidationError(e.field(), source_name + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (corpus.back().trajectory.feature_dim() != corpus.front().trajectory.feature_dim()) {
      throw ValidationError("features", source_name + ":" + std::to_string(line_no) +
                                            ": dimension differs from the first record");
    }
  }
  return corpus;
}

Corpus parse_corpus(const std::filesystem::path& source) {
  std::ifstream f(source, std::ios::binary);
  if (!f) throw IoError("cannot open corpus " + source.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_corpus_string(ss.str(), source.string());
}

}  // namespace pqm
