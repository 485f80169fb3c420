#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vgidm/adam.hpp"
#include "vgidm/matcher.hpp"
#include "vgidm/metrics.hpp"
#include "vgidm/rng.hpp"
#include "vgidm/scene.hpp"

namespace vgidm {

struct TrainConfig {
  int epochs = 150;
  double lr = 1e-4;
  std::size_t batch_frames = 1;  ///< frame pairs per optimizer step
  bool balance = true;           ///< resample the minority label to 1:1 within each step
  std::uint64_t seed = 0;
  std::ostream* log = nullptr;   ///< warnings and per-epoch progress
};

struct TrainResult {
  std::vector<double> loss_history;  ///< mean step loss per epoch
  bool single_class = false;
};

namespace detail {

using FramePairKey = std::pair<std::size_t, std::size_t>;

inline std::vector<std::pair<FramePairKey, std::vector<PairLabel>>> group_by_frames(const Dataset& ds,
                                                                                   const std::vector<PairLabel>& pairs) {
  std::map<FramePairKey, std::vector<PairLabel>> groups;
  for (const auto& p : pairs) groups[{ds.frame_index_of_patch(p.a), ds.frame_index_of_patch(p.b)}].push_back(p);
  return {groups.begin(), groups.end()};
}

/// Matched and unmatched pairs drawn 1:1, the minority resampled with replacement.
inline std::vector<PairLabel> balanced(const std::vector<PairLabel>& pairs, Rng& rng) {
  std::vector<PairLabel> pos, neg;
  for (const auto& p : pairs) (p.matched ? pos : neg).push_back(p);
  if (pos.empty() || neg.empty()) return pairs;
  auto& minority = pos.size() < neg.size() ? pos : neg;
  const std::size_t target = std::max(pos.size(), neg.size());
  const std::size_t have = minority.size();
  while (minority.size() < target) minority.push_back(minority[rng.index(have)]);
  pos.insert(pos.end(), neg.begin(), neg.end());
  return pos;
}

}  // namespace detail

/// Minibatch Adam on -L_empID. Deterministic given the model and config seed.
inline TrainResult train(MatchModel& model, const Dataset& ds, const TrainConfig& cfg) {
  const auto& pairs = ds.train.pairs;
  if (pairs.empty()) throw std::invalid_argument("train: empty training split");
  TrainResult result;
  const auto matched = std::count_if(pairs.begin(), pairs.end(), [](const PairLabel& p) { return p.matched; });
  result.single_class = matched == 0 || static_cast<std::size_t>(matched) == pairs.size();
  if (result.single_class && cfg.log) *cfg.log << "warning: training split has a single label\n";

  auto groups = detail::group_by_frames(ds, pairs);
  AdamState adam;
  adam.config.lr = cfg.lr;
  Rng rng(cfg.seed);
  Rng order_rng = rng.split("order");
  Rng balance_rng = rng.split("balance");
  const std::size_t per_step = std::max<std::size_t>(1, cfg.batch_frames);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(groups);
    double total = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < groups.size(); start += per_step) {
      const std::size_t stop = std::min(groups.size(), start + per_step);
      Tape tape;
      std::map<std::size_t, std::vector<PatchEmbedding>> embedded;
      auto embed = [&](std::size_t f) -> const std::vector<PatchEmbedding>& {
        auto it = embedded.find(f);
        if (it == embedded.end()) it = embedded.emplace(f, embed_frame(tape, ds.frames[f], model)).first;
        return it->second;
      };
      std::vector<LabeledEmbeddingPair> batch;
      for (std::size_t g = start; g < stop; ++g) {
        const auto& [key, group] = groups[g];
        const auto& ea = embed(key.first);
        const auto& eb = embed(key.second);
        const auto chosen = cfg.balance ? detail::balanced(group, balance_rng) : group;
        for (const auto& p : chosen) {
          batch.push_back({&ea.at(ds.position_in_frame(p.a)), &eb.at(ds.position_in_frame(p.b)), p.matched});
        }
      }
      Var loss = loss_emp_id(tape, batch, model);
      model.params.zero_grad();
      tape.backward(loss);
      adam_step(model.params, adam);
      total += loss.value().item();
      ++steps;
    }
    result.loss_history.push_back(total / static_cast<double>(steps));
    if (cfg.log) *cfg.log << "epoch " << epoch + 1 << " loss " << result.loss_history.back() << "\n";
  }
  return result;
}

/// Per-frame embedding bundles, computed once per frame and reused across pairs.
class BundleCache {
 public:
  BundleCache(const Dataset& ds, MatchModel& model) : ds_(ds), model_(model) {}

  const EmbeddingBundle& of(std::int64_t patch_id) {
    const std::size_t f = ds_.frame_index_of_patch(patch_id);
    auto it = frames_.find(f);
    if (it == frames_.end()) it = frames_.emplace(f, frame_bundles(ds_.frames[f], model_)).first;
    return it->second.at(ds_.position_in_frame(patch_id));
  }

 private:
  const Dataset& ds_;
  MatchModel& model_;
  std::map<std::size_t, std::vector<EmbeddingBundle>> frames_;
};

struct ScoredPairs {
  std::vector<double> scores;
  std::vector<bool> labels;
  std::vector<MatchResult> results;
};

inline ScoredPairs score_pairs(const Dataset& ds, const std::vector<PairLabel>& pairs, MatchModel& model,
                               const PairScorer& scorer) {
  BundleCache cache(ds, model);
  ScoredPairs out;
  for (const auto& p : pairs) {
    const auto r = scorer(cache.of(p.a), cache.of(p.b));
    out.results.push_back(r);
    out.scores.push_back(r.score);
    out.labels.push_back(p.matched);
  }
  return out;
}

inline ScoredPairs score_pairs(const Dataset& ds, const std::vector<PairLabel>& pairs, MatchModel& model) {
  return score_pairs(ds, pairs, model, make_scorer(model));
}

/// Precision, recall, F1 and AUC of a model on labelled pairs at threshold gamma.
inline Metrics evaluate(MatchModel& model, const Dataset& ds, const std::vector<PairLabel>& pairs, double gamma) {
  if (pairs.empty()) throw std::invalid_argument("evaluate: empty test set");
  const auto s = score_pairs(ds, pairs, model);
  return evaluate_scores(s.scores, s.labels, gamma);
}

inline Metrics evaluate(MatchModel& model, const Dataset& ds) {
  return evaluate(model, ds, ds.test.pairs, model.config.gamma);
}

}  // namespace vgidm
