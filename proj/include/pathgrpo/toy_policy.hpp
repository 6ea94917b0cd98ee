#pragma once

// A linear-softmax policy over a finite table of response templates. Small
// enough that every log-probability and gradient is exact, rich enough that
// each reward channel has something to learn: per option letter the table
// holds a rubric-complete well-formed response, a rubric-deficient
// well-formed response and a malformed one.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "pathgrpo/dataset.hpp"
#include "pathgrpo/error.hpp"
#include "pathgrpo/grpo.hpp"
#include "pathgrpo/hash.hpp"

namespace pathgrpo {

inline constexpr std::size_t kDefaultFeatureDim = 256;
inline constexpr std::size_t kDefaultLetterSlots = 4;
// L2 norm of the hashed (non-bias) block of a feature vector. Sets the
// effective step size of the fixed-rate optimizer.
inline constexpr double kHashedFeatureNorm = 3.0;
inline constexpr int kCheckpointVersion = 1;

// Phrases that identify the two reasoning styles in rendered responses.
inline constexpr std::string_view kCompleteThinkMarker = "Image features examined";
inline constexpr std::string_view kDeficientThinkMarker = "Answer chosen without a detailed review";

enum class TemplateKind { complete = 0, deficient = 1, malformed = 2 };
inline constexpr std::size_t kKindsPerLetter = 3;

struct ResponseTemplate {
  std::size_t id = 0;
  char letter = 'A';
  TemplateKind kind = TemplateKind::complete;

  std::string render(const Problem& p) const {
    const Option* opt = p.find_option(letter);
    const std::string content = opt ? opt->content : std::string();
    const std::string answer = "<answer>" + std::string(1, letter) + ". " + content + "</answer>";
    switch (kind) {
      case TemplateKind::complete: {
        std::string others;
        for (const auto& o : p.options) {
          if (o.letter == letter) continue;
          if (!others.empty()) others += ", ";
          others += o.letter;
        }
        return "<think>" + std::string(kCompleteThinkMarker) +
               ": the morphology in the image is reviewed against each option. "
               "Options " + others + " are eliminated step by step because their "
               "defining features are absent. Histological knowledge supports " +
               content + ".</think>" + answer;
      }
      case TemplateKind::deficient:
        return "<think>" + std::string(kDeficientThinkMarker) + ".</think>" + answer;
      case TemplateKind::malformed:
        return answer;
    }
    return answer;
  }
};

inline std::size_t template_count_for(std::size_t letter_slots) {
  return letter_slots * kKindsPerLetter;
}

inline ResponseTemplate template_at(std::size_t id) {
  return ResponseTemplate{id, static_cast<char>('A' + id / kKindsPerLetter),
                          static_cast<TemplateKind>(id % kKindsPerLetter)};
}

inline std::size_t template_id_for(char letter, TemplateKind kind) {
  return static_cast<std::size_t>(letter - 'A') * kKindsPerLetter +
         static_cast<std::size_t>(kind);
}

/// Well-formed response naming the gold option with the complete chain.
inline std::size_t gold_template_id(const Problem& p) {
  return template_id_for(p.gold.letter, TemplateKind::complete);
}

// ---------------------------------------------------------------------------
// Features

namespace detail {

inline std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      cur += static_cast<char>(std::tolower(u));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace detail

/// Index 0 is a constant bias; the remaining entries hold signed hashed
/// question unigrams/bigrams and letter-tagged option unigrams, scaled to L2
/// norm kHashedFeatureNorm.
inline Eigen::VectorXd featurize(const Problem& p, std::size_t feature_dim = kDefaultFeatureDim) {
  if (feature_dim < 2) throw ConfigError("feature_dim must be >= 2");
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(feature_dim));
  auto add = [&](const std::string& key) {
    const std::uint64_t h = fnv1a64(key);
    const auto idx = static_cast<Eigen::Index>(1 + h % (feature_dim - 1));
    x[idx] += (h >> 63) ? -1.0 : 1.0;
  };
  const auto q = detail::words(p.question);
  for (std::size_t i = 0; i < q.size(); ++i) {
    add("q1:" + q[i]);
    if (i + 1 < q.size()) add("q2:" + q[i] + "_" + q[i + 1]);
  }
  for (const auto& o : p.options) {
    for (const auto& w : detail::words(o.content)) add(std::string("o:") + o.letter + ":" + w);
  }
  const double norm = x.tail(x.size() - 1).norm();
  if (norm > 0) x.tail(x.size() - 1) *= kHashedFeatureNorm / norm;
  x[0] = 1.0;
  return x;
}

// ---------------------------------------------------------------------------
// Parameters and distribution

struct PolicyParams {
  Eigen::MatrixXd theta;  // feature_dim x template_count

  static PolicyParams zeros(std::size_t feature_dim = kDefaultFeatureDim,
                            std::size_t letter_slots = kDefaultLetterSlots) {
    return {Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(feature_dim),
                                  static_cast<Eigen::Index>(template_count_for(letter_slots)))};
  }

  std::size_t feature_dim() const noexcept { return static_cast<std::size_t>(theta.rows()); }
  std::size_t template_count() const noexcept { return static_cast<std::size_t>(theta.cols()); }

  bool bitwise_equal(const PolicyParams& o) const {
    return theta.rows() == o.theta.rows() && theta.cols() == o.theta.cols() &&
           std::equal(theta.data(), theta.data() + theta.size(), o.theta.data(),
                      [](double a, double b) {
                        return std::memcmp(&a, &b, sizeof(double)) == 0;
                      });
  }
};

inline Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return (logits.array() - lse).matrix();
}

inline Eigen::VectorXd template_logprobs(const PolicyParams& params, const Eigen::VectorXd& x) {
  return log_softmax(params.theta.transpose() * x);
}

inline Eigen::VectorXd template_logprobs(const PolicyParams& params, const Problem& p) {
  return template_logprobs(params, featurize(p, params.feature_dim()));
}

inline void check_template_id(const PolicyParams& params, std::size_t template_id) {
  if (template_id >= params.template_count()) {
    throw ConfigError("template id " + std::to_string(template_id) + " out of range [0, " +
                      std::to_string(params.template_count()) + ")");
  }
}

inline double logprob(const PolicyParams& params, const Problem& p, std::size_t template_id) {
  check_template_id(params, template_id);
  return template_logprobs(params, p)[static_cast<Eigen::Index>(template_id)];
}

/// d logprob(template) / d theta = x (onehot(template) - softmax)^T
inline Eigen::MatrixXd logprob_grad(const PolicyParams& params, const Eigen::VectorXd& x,
                                    std::size_t template_id) {
  check_template_id(params, template_id);
  Eigen::VectorXd delta = -template_logprobs(params, x).array().exp().matrix();
  delta[static_cast<Eigen::Index>(template_id)] += 1.0;
  return x * delta.transpose();
}

inline Eigen::MatrixXd logprob_grad(const PolicyParams& params, const Problem& p,
                                    std::size_t template_id) {
  return logprob_grad(params, featurize(p, params.feature_dim()), template_id);
}

struct SftStep {
  double loss = 0.0;
  Eigen::MatrixXd gradient;  // of the loss; descend along -gradient
};

/// Negative log-likelihood of the target template and its gradient.
inline SftStep sft_loss_and_grad(const PolicyParams& params, const Problem& p,
                                 std::size_t target_template_id) {
  const Eigen::VectorXd x = featurize(p, params.feature_dim());
  check_template_id(params, target_template_id);
  SftStep s;
  s.loss = -template_logprobs(params, x)[static_cast<Eigen::Index>(target_template_id)];
  s.gradient = -logprob_grad(params, x, target_template_id);
  return s;
}

// ---------------------------------------------------------------------------
// Sampling

struct SampledResponse {
  std::size_t template_id = 0;
  double logprob = 0.0;
};

/// Lowest index among the maxima.
inline std::size_t argmax_template(const Eigen::VectorXd& logprobs) {
  std::size_t best = 0;
  for (Eigen::Index k = 1; k < logprobs.size(); ++k) {
    if (logprobs[k] > logprobs[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(k);
  }
  return best;
}

inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Draws from a distribution given as log-probabilities by inverse CDF.
inline std::size_t draw_template(const Eigen::VectorXd& logprobs, std::mt19937_64& rng) {
  const double u = unit_uniform(rng);
  double acc = 0.0;
  for (Eigen::Index k = 0; k < logprobs.size(); ++k) {
    acc += std::exp(logprobs[k]);
    if (u < acc) return static_cast<std::size_t>(k);
  }
  return static_cast<std::size_t>(logprobs.size() - 1);
}

/// G i.i.d. draws (or G copies of the argmax when `greedy`).
inline std::vector<SampledResponse> sample_group(const PolicyParams& params, const Problem& p,
                                                 std::size_t group_size, std::uint64_t seed,
                                                 bool greedy = false) {
  if (group_size < 2) throw ConfigError("group size must be >= 2");
  const Eigen::VectorXd lp = template_logprobs(params, p);
  std::mt19937_64 rng(seed);
  std::vector<SampledResponse> out;
  out.reserve(group_size);
  for (std::size_t i = 0; i < group_size; ++i) {
    const std::size_t id = greedy ? argmax_template(lp) : draw_template(lp, rng);
    out.push_back({id, lp[static_cast<Eigen::Index>(id)]});
  }
  return out;
}

/// Adapts a (params, problem, group) triple to the PolicyHandle concept.
class ToyPolicyHandle {
 public:
  using gradient_type = Eigen::MatrixXd;

  ToyPolicyHandle(const PolicyParams& params, const Problem& problem, const ResponseGroup& group)
      : params_(params), x_(featurize(problem, params.feature_dim())), group_(group) {}

  gradient_type zero_gradient() const {
    return Eigen::MatrixXd::Zero(params_.theta.rows(), params_.theta.cols());
  }

  gradient_type logprob_grad(std::size_t response) const {
    return pathgrpo::logprob_grad(params_, x_, group_.responses.at(response).template_id);
  }

  bool is_finite(const gradient_type& g) const { return g.allFinite(); }

 private:
  const PolicyParams& params_;
  Eigen::VectorXd x_;
  const ResponseGroup& group_;
};

static_assert(PolicyHandle<ToyPolicyHandle>);

// ---------------------------------------------------------------------------
// Policy triple and checkpoints

struct PolicyTriple {
  PolicyParams current;
  PolicyParams old;        // sampling snapshot
  PolicyParams reference;  // frozen at stage entry
  std::uint64_t old_snapshot_id = 0;

  static PolicyTriple from(const PolicyParams& p) { return {p, p, p, 0}; }

  void snapshot_old() {
    old = current;
    ++old_snapshot_id;
  }

  void freeze_reference() { reference = current; }
};

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, std::size_t rows,
                                        std::size_t cols, std::string_view field) {
  if (!j.is_array() || j.size() != rows) {
    throw CheckpointError("checkpoint field '" + std::string(field) + "' must have " +
                          std::to_string(rows) + " rows");
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& row = j[r];
    if (!row.is_array() || row.size() != cols) {
      throw CheckpointError("checkpoint field '" + std::string(field) + "' row " +
                            std::to_string(r) + " must have " + std::to_string(cols) + " entries");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!row[c].is_number()) {
        throw CheckpointError("checkpoint field '" + std::string(field) + "' has a non-numeric entry");
      }
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c].get<double>();
    }
  }
  if (!m.allFinite()) throw CheckpointError("checkpoint contains non-finite parameters");
  return m;
}

}  // namespace detail

struct Checkpoint {
  PolicyTriple policy;
  std::string stage;
  std::size_t step = 0;
};

/// `theta` holds the current parameters; `old_theta` and `reference_theta`
/// carry the rest of the triple so a restore is exact.
inline nlohmann::json checkpoint_to_json(const Checkpoint& ck) {
  const auto& p = ck.policy;
  return {{"version", kCheckpointVersion},
          {"feature_dim", p.current.feature_dim()},
          {"template_count", p.current.template_count()},
          {"theta", detail::matrix_to_json(p.current.theta)},
          {"old_theta", detail::matrix_to_json(p.old.theta)},
          {"reference_theta", detail::matrix_to_json(p.reference.theta)},
          {"old_snapshot_id", p.old_snapshot_id},
          {"stage", ck.stage},
          {"step", ck.step}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw CheckpointError("checkpoint version " + std::to_string(version) +
                            " is not supported (expected " + std::to_string(kCheckpointVersion) +
                            ")");
    }
    const auto rows = j.at("feature_dim").get<std::size_t>();
    const auto cols = j.at("template_count").get<std::size_t>();
    if (rows < 2 || cols == 0 || cols % kKindsPerLetter != 0) {
      throw CheckpointError("checkpoint has an invalid shape");
    }
    Checkpoint ck;
    ck.policy.current.theta = detail::matrix_from_json(j.at("theta"), rows, cols, "theta");
    ck.policy.old = ck.policy.current;
    ck.policy.reference = ck.policy.current;
    if (j.contains("old_theta")) {
      ck.policy.old.theta = detail::matrix_from_json(j["old_theta"], rows, cols, "old_theta");
    }
    if (j.contains("reference_theta")) {
      ck.policy.reference.theta =
          detail::matrix_from_json(j["reference_theta"], rows, cols, "reference_theta");
    }
    ck.policy.old_snapshot_id = j.value("old_snapshot_id", std::uint64_t{0});
    ck.stage = j.at("stage").get<std::string>();
    ck.step = j.at("step").get<std::size_t>();
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
    out << checkpoint_to_json(ck).dump() << '\n';
    if (!out) throw CheckpointError("short write to checkpoint '" + path + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw CheckpointError("cannot move checkpoint into place at '" + path + "'");
  }
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  auto j = nlohmann::json::parse(buf.str(), nullptr, false);
  if (j.is_discarded()) throw CheckpointError("checkpoint '" + path + "' is not valid JSON");
  return checkpoint_from_json(j);
}

}  // namespace pathgrpo
