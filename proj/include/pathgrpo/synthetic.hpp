#pragma once

// Deterministic synthetic pathology-style multiple-choice problems for tests,
// demos and desk-scale training runs.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pathgrpo/dataset.hpp"

namespace pathgrpo {

namespace detail {

inline const std::vector<std::string>& tissue_words() {
  static const std::vector<std::string> v = {
      "liver",   "kidney",  "lung",     "thyroid", "breast", "colon",  "stomach",
      "skin",    "lymph",   "prostate", "bone",    "brain",  "ovary",  "pancreas",
      "bladder", "cervix",  "spleen",   "heart",   "testis", "adrenal"};
  return v;
}

inline const std::vector<std::string>& finding_words() {
  static const std::vector<std::string> v = {
      "nuclear pleomorphism",  "granuloma formation",  "caseous necrosis",
      "psammoma bodies",       "signet ring cells",    "keratin pearls",
      "Reed Sternberg cells",  "Orphan Annie nuclei",  "Call Exner bodies",
      "Schiller Duval bodies", "Mallory hyaline",      "Councilman bodies",
      "Aschoff nodules",       "Homer Wright rosettes", "Verocay bodies",
      "koilocytic atypia",     "foamy macrophages",    "crescent formation",
      "hyaline membranes",     "Rosenthal fibers"};
  return v;
}

inline const std::vector<std::string>& diagnosis_words() {
  static const std::vector<std::string> v = {
      "Pleomorphism",          "Tuberculosis",         "Papillary carcinoma",
      "Adenocarcinoma",        "Squamous carcinoma",   "Hodgkin lymphoma",
      "Granulosa cell tumor",  "Yolk sac tumor",       "Alcoholic hepatitis",
      "Viral hepatitis",       "Rheumatic carditis",   "Neuroblastoma",
      "Schwannoma",            "HPV infection",        "Xanthoma",
      "Glomerulonephritis",    "Diffuse alveolar damage", "Pilocytic astrocytoma",
      "Sarcoidosis",           "Metaplasia",           "Dysplasia",
      "Hyperplasia",           "Infarction",           "Amyloidosis"};
  return v;
}

}  // namespace detail

/// `n` problems with `option_count` options each; gold letters and option
/// contents are drawn from a seeded engine. Records are untagged.
inline std::vector<Problem> make_synthetic_problems(std::size_t n, std::uint64_t seed,
                                                    std::size_t option_count = 4) {
  const auto& tissues = detail::tissue_words();
  const auto& findings = detail::finding_words();
  const auto& diagnoses = detail::diagnosis_words();
  std::mt19937_64 rng(seed);
  std::vector<Problem> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Problem p;
    p.id = "syn-" + std::to_string(i);
    const auto& tissue = tissues[bounded_draw(rng, tissues.size())];
    const auto& finding = findings[bounded_draw(rng, findings.size())];
    p.question = "Case " + std::to_string(i) + " " + tissue + " specimen " +
                 std::to_string(1000 + bounded_draw(rng, 9000)) + " shows " + finding +
                 ". Which diagnosis best explains the image?";
    std::vector<std::size_t> pool(diagnoses.size());
    for (std::size_t k = 0; k < pool.size(); ++k) pool[k] = k;
    seeded_shuffle(pool, rng);
    for (std::size_t k = 0; k < option_count; ++k) {
      p.options.push_back({static_cast<char>('A' + k), diagnoses[pool[k]]});
    }
    p.gold = p.options[bounded_draw(rng, option_count)];
    if (i % 3 == 0) p.image_ref = "images/" + p.id + ".png";
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace pathgrpo
