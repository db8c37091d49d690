#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "asc/chain.hpp"
#include "asc/model.hpp"
#include "asc/objectives.hpp"

namespace asc::testing {

/// Table whose row r puts all mass on column pick(r).
inline ConditionalTable one_hot_table(std::vector<int> parents, int child, const std::function<int(Eigen::Index)>& pick,
                                      bool floor = true) {
  Eigen::Index rows = 1;
  for (int d : parents) rows *= d;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(rows, child);
  for (Eigen::Index r = 0; r < rows; ++r) w(r, pick(r)) = 1.0;
  return ConditionalTable::normalized(std::move(parents), w, floor);
}

inline ModelSpec binary() { return {2, 2, 2, 2, 2, 2, 2}; }

/// Every table one-hot on value 0, so the chain stays at the all-zero state.
inline GenerativeModel deterministic_model(const ModelSpec& s = binary(), bool floor = true) {
  auto zero = [](Eigen::Index) { return 0; };
  return {s,
          one_hot_table({s.card_a1, s.card_s1}, s.card_o, zero, floor),
          one_hot_table({s.card_s1, s.card_s2, s.card_a}, s.card_s1, zero, floor),
          one_hot_table({s.card_s2, s.card_a}, s.card_s2, zero, floor),
          one_hot_table({s.card_o, s.card_a1}, s.card_a, zero, floor),
          one_hot_table({s.card_s1, s.card_a2}, s.card_a1, zero, floor),
          one_hot_table({s.card_s2}, s.card_a2, zero, floor)};
}

/// R(o | a1) one-hot on o = a1 and R(s1 | a2) one-hot on s1 = a2.
inline ReferenceModel matching_reference(const ModelSpec& s, bool floor = true) {
  auto same = [](Eigen::Index r) { return int(r); };
  return {one_hot_table({s.card_a1}, s.card_o, same, floor), one_hot_table({s.card_a2}, s.card_s1, same, floor)};
}

/// Recognition factors one-hot on value 0 in every context.
inline RecognitionModel one_hot_recognition(const ModelSpec& s, bool floor = true) {
  RecognitionModel::Logits logits = RecognitionModel::zero_logits(s);
  for (Eigen::MatrixXd& m : logits) {
    m.setConstant(-1000.0);
    m.col(0).setZero();
  }
  return {s, logits, floor};
}

struct Bundle {
  GenerativeModel gen;
  RecognitionModel rec;
  ReferenceModel ref;
  Models models() const { return {gen, rec, ref}; }
};

inline Bundle random_bundle(const ModelSpec& s, std::uint64_t seed) {
  Rng rng(seed);
  GenerativeModel gen = GenerativeModel::random(s, rng);
  ReferenceModel ref = ReferenceModel::random(s, rng);
  return {std::move(gen), RecognitionModel::random(s, seed ^ 0x5a5a), std::move(ref)};
}

inline Bundle uniform_bundle(const ModelSpec& s) {
  return {GenerativeModel::uniform(s), RecognitionModel::uniform(s), ReferenceModel::uniform(s)};
}

/// Two-state alternation: A = all zero (cost 0), B = (o, s1, s2, a1, a2) = 1 (cost 1).
inline Bundle two_cycle() {
  ModelSpec s = binary();
  s.tick_period_level2 = 1;
  auto flip = [](int parent_stride) {
    return [parent_stride](Eigen::Index r) { return 1 - int(r / parent_stride) % 2; };
  };
  auto copy = [](int parent_stride) { return [parent_stride](Eigen::Index r) { return int(r / parent_stride) % 2; }; };
  GenerativeModel gen{s,
                      one_hot_table({2, 2}, 2, copy(1), false),      // o = s1
                      one_hot_table({2, 2, 2}, 2, flip(4), false),   // s1 = 1 - s1_prev
                      one_hot_table({2, 2}, 2, flip(2), false),      // s2 = 1 - s2_prev
                      one_hot_table({2, 2}, 2, [](Eigen::Index) { return 0; }, false),
                      one_hot_table({2, 2}, 2, copy(2), false),      // a1 = s1
                      one_hot_table({2}, 2, copy(1), false)};        // a2 = s2
  Eigen::MatrixXd ro(2, 2);
  ro << 1.0, 0.0, 1.0 - std::exp(-1.0), std::exp(-1.0);
  ReferenceModel ref{ConditionalTable({2}, 2, ro, false), matching_reference(s, false).ref_s1};
  return {gen, RecognitionModel::uniform(s), ref};
}

}  // namespace asc::testing
