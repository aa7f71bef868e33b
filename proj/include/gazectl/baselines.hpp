#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gazectl/cues.hpp"
#include "gazectl/error.hpp"
#include "gazectl/features.hpp"
#include "gazectl/oracle.hpp"
#include "gazectl/scene.hpp"

namespace gazectl {

/// Effective-attention heuristic. Product: (prod of active cue weights) * P(r) * Theta(theta),
/// empty product = 1. Sum: (sum of active cue weights) * P(r) * O(theta), empty sum = 0.
/// P(r) = exp(-alpha r); Theta = O = exp(-theta^2 / (2 sigma^2)). The 2D box scores w_box.
struct HeuristicWeights {
    AttentionForm kind = AttentionForm::Product;
    std::array<double, kCueCount> w{1, 1, 1, 1, 1, 1, 1, 1};
    double alpha = 0.0;
    double sigma_deg = 45.0;
    double w_box = 1.0;
    CueSet cue_mask = kAllCues;

    static constexpr double kAlphaMin = 0.0, kAlphaMax = 2.0;
    static constexpr double kSigmaMin = 5.0, kSigmaMax = 180.0;

    void validate() const {
        for (double v : w)
            if (!(v > 0) || !std::isfinite(v)) throw Error(ErrorCode::InvalidConfig, "cue weights must be finite and > 0");
        if (!(w_box > 0) || !std::isfinite(w_box)) throw Error(ErrorCode::InvalidConfig, "w_box must be finite and > 0");
        if (!(alpha >= kAlphaMin && alpha <= kAlphaMax)) throw Error(ErrorCode::InvalidConfig, "alpha outside [0, 2]");
        if (!(sigma_deg >= kSigmaMin && sigma_deg <= kSigmaMax)) throw Error(ErrorCode::InvalidConfig, "sigma outside [5, 180] degrees");
    }
};

inline nlohmann::json to_json(const HeuristicWeights& h) {
    nlohmann::json w = nlohmann::json::object();
    for (int i = 0; i < kCueCount; ++i) w[std::string(kCueNames[static_cast<std::size_t>(i)])] = h.w[static_cast<std::size_t>(i)];
    nlohmann::json mask = nlohmann::json::array();
    for (int i = 0; i < kCueCount; ++i)
        if (h.cue_mask & (1u << i)) mask.push_back(std::string(kCueNames[static_cast<std::size_t>(i)]));
    return {{"kind", to_string(h.kind)}, {"w", w},           {"alpha", h.alpha},
            {"sigma_deg", h.sigma_deg}, {"w_box", h.w_box}, {"cues", mask}};
}

inline HeuristicWeights heuristic_from_json(const nlohmann::json& j) {
    HeuristicWeights h;
    try {
        h.kind = parse_form(j.at("kind").get<std::string>());
        for (const auto& [name, v] : j.at("w").items()) h.w[static_cast<std::size_t>(parse_cue(name))] = v.get<double>();
        h.alpha = j.at("alpha").get<double>();
        h.sigma_deg = j.at("sigma_deg").get<double>();
        h.w_box = j.at("w_box").get<double>();
        if (j.contains("cues")) {
            h.cue_mask = 0;
            for (const auto& c : j.at("cues")) h.cue_mask |= cue_bit(parse_cue(c.get<std::string>()));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("heuristic weights: ") + e.what());
    }
    h.validate();
    return h;
}

inline constexpr double kAbsentScore = -std::numeric_limits<double>::infinity();

inline double ea_value(CueSet cues, double distance_m, double angle_deg, const HeuristicWeights& h) {
    cues &= h.cue_mask;
    double cue = h.kind == AttentionForm::Product ? 1.0 : 0.0;
    for (int i = 0; i < kCueCount; ++i) {
        if ((cues & (1u << i)) == 0) continue;
        if (h.kind == AttentionForm::Product)
            cue *= h.w[static_cast<std::size_t>(i)];
        else
            cue += h.w[static_cast<std::size_t>(i)];
    }
    return cue * std::exp(-h.alpha * distance_m) * std::exp(-(angle_deg * angle_deg) / (2.0 * h.sigma_deg * h.sigma_deg));
}

/// EA per label; absent targets score -infinity.
inline std::vector<double> ea_score(const SceneFrame& frame, const HeuristicWeights& h) {
    std::vector<double> out(static_cast<std::size_t>(label_count(frame.variant)), kAbsentScore);
    bool any = false;
    for (int i = 0; i < frame.capacity(); ++i) {
        if (!frame.present(i)) continue;
        out[static_cast<std::size_t>(i)] = ea_value(active_cues(frame, i), frame.distance(i), frame.angle(i), h);
        any = true;
    }
    if (frame.variant == Variant::TwoD && frame.box_present) {
        out[kBoxLabel] = h.w_box;
        any = true;
    }
    if (!any) throw Error(ErrorCode::NoPresentTarget, "frame has no present target");
    return out;
}

/// EA argmax, lowest label on ties.
inline Label predict(const SceneFrame& frame, const HeuristicWeights& h) {
    const auto s = ea_score(frame, h);
    return argmax_label(s);
}

// ---------------------------------------------------------------------------
// Genetic fitting

struct GaConfig {
    int population = 60;
    int generations = 200;
    /// Standard deviation of the log-space mutation of weights and sigma.
    double mutation_sigma = 0.3;
    double alpha_mutation = 0.1;
    double mutation_rate = 0.3;
    int elites = 2;
    int tournament = 3;
    std::uint64_t seed = 0;
    /// Fraction of situations held out when fit_ga is given a single dataset.
    double holdout = 0.2;
};

/// One distinct (targets, label) case with its multiplicity.
struct GaCase {
    std::array<CueSet, 5> cues{};
    std::array<double, 5> distance{};
    std::array<double, 5> angle{};
    std::array<bool, 5> present{};
    int label = 0;
    double count = 0;
};

struct GaCases {
    Variant variant = Variant::TwoD;
    std::vector<GaCase> cases;
    double total = 0;
};

/// Frames the baseline judges: the label frame when the dataset stores it, else the last window frame.
inline SceneFrame baseline_frame(const Dataset& data, std::size_t i) {
    const auto v = data.meta().variant;
    const auto L = static_cast<std::size_t>(data.width());
    std::vector<double> flat(L);
    if (const auto lf = data.label_frame(i)) {
        std::copy(lf->begin(), lf->end(), flat.begin());
    } else {
        const auto w = data.window(i);
        std::copy(w.end() - static_cast<std::ptrdiff_t>(L), w.end(), flat.begin());
    }
    return decode_frame(unflatten(v, flat, data.meta().normalized), data.meta().normalization);
}

inline GaCases collect_cases(const Dataset& data) {
    GaCases out;
    out.variant = data.meta().variant;
    std::map<std::vector<float>, std::size_t> seen;
    const auto L = static_cast<std::size_t>(data.width());
    std::vector<float> key(L + 1);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto lf = data.label_frame(i);
        const auto src = lf ? *lf : data.window(i).last(L);
        std::copy(src.begin(), src.end(), key.begin());
        key[L] = static_cast<float>(data.label(i));
        auto [it, fresh] = seen.try_emplace(key, out.cases.size());
        if (fresh) {
            const SceneFrame f = baseline_frame(data, i);
            GaCase c;
            for (int p = 0; p < f.capacity(); ++p) {
                const auto s = static_cast<std::size_t>(p);
                c.present[s] = f.present(p);
                if (!c.present[s]) continue;
                c.cues[s] = active_cues(f, p);
                c.distance[s] = f.distance(p);
                c.angle[s] = f.angle(p);
            }
            c.label = data.label(i);
            out.cases.push_back(c);
        }
        out.cases[it->second].count += 1;
        out.total += 1;
    }
    return out;
}

/// Log-space scores closer than this count as tied (lowest label wins).
inline constexpr double kLogTieTolerance = 1e-9;

/// Weighted fraction of cases whose EA argmax equals the label. Scores are compared in
/// log space; a box-less frame with no present person counts as a miss.
inline double case_accuracy(const GaCases& cs, const HeuristicWeights& h) {
    if (cs.total == 0) return 0.0;
    const int people = capacity(cs.variant);
    const bool box = cs.variant == Variant::TwoD;
    std::array<double, kCueCount> logw{};
    for (int i = 0; i < kCueCount; ++i) logw[static_cast<std::size_t>(i)] = std::log(h.w[static_cast<std::size_t>(i)]);
    const double log_box = std::log(h.w_box);
    const double inv2s2 = 1.0 / (2.0 * h.sigma_deg * h.sigma_deg);
    double hit = 0;
    for (const auto& c : cs.cases) {
        int best = -1;
        double best_score = kAbsentScore;
        for (int p = 0; p < people; ++p) {
            const auto s = static_cast<std::size_t>(p);
            if (!c.present[s]) continue;
            const CueSet cues = c.cues[s] & h.cue_mask;
            double cue;
            if (h.kind == AttentionForm::Product) {
                cue = 0;
                for (int i = 0; i < kCueCount; ++i)
                    if (cues & (1u << i)) cue += logw[static_cast<std::size_t>(i)];
            } else {
                double sum = 0;
                for (int i = 0; i < kCueCount; ++i)
                    if (cues & (1u << i)) sum += h.w[static_cast<std::size_t>(i)];
                cue = sum > 0 ? std::log(sum) : kAbsentScore;
            }
            const double score = cue - h.alpha * c.distance[s] - c.angle[s] * c.angle[s] * inv2s2;
            if (best < 0 || score > best_score + kLogTieTolerance) {
                best = p;
                best_score = score;
            }
        }
        if (box && (best < 0 || log_box > best_score + kLogTieTolerance)) best = kBoxLabel;
        if (best == c.label) hit += c.count;
    }
    return hit / cs.total;
}

inline double baseline_accuracy(const Dataset& data, const HeuristicWeights& h) {
    if (data.empty()) throw Error(ErrorCode::EmptyDataset, "dataset is empty");
    return case_accuracy(collect_cases(data), h);
}

struct GaResult {
    HeuristicWeights best;
    double train_accuracy = 0;
    double heldout_accuracy = 0;
    /// Best fitness after each generation; entry 0 is the initial population.
    std::vector<double> fitness_history;
};

inline nlohmann::json to_json(const GaResult& r) {
    return {{"weights", to_json(r.best)},
            {"train_accuracy", r.train_accuracy},
            {"heldout_accuracy", r.heldout_accuracy},
            {"fitness_history", r.fitness_history}};
}

namespace detail {

struct Genome {
    std::array<double, kCueCount> logw{};
    double log_box = 0;
    double alpha = 0;
    double log_sigma = 0;
};

inline HeuristicWeights express(const Genome& g, AttentionForm kind, CueSet mask) {
    HeuristicWeights h;
    h.kind = kind;
    h.cue_mask = mask;
    for (int i = 0; i < kCueCount; ++i) h.w[static_cast<std::size_t>(i)] = std::exp(g.logw[static_cast<std::size_t>(i)]);
    h.w_box = std::exp(g.log_box);
    h.alpha = std::clamp(g.alpha, HeuristicWeights::kAlphaMin, HeuristicWeights::kAlphaMax);
    h.sigma_deg = std::clamp(std::exp(g.log_sigma), HeuristicWeights::kSigmaMin, HeuristicWeights::kSigmaMax);
    return h;
}

}  // namespace detail

/// Maximizes top-1 accuracy on `train` with an elitist GA (tournament selection, uniform
/// crossover, log-space mutation). Deterministic in cfg.seed.
inline GaResult fit_ga(const Dataset& train, const Dataset& heldout, AttentionForm kind, const GaConfig& cfg,
                       CueSet cue_mask = kAllCues) {
    if (train.empty()) throw Error(ErrorCode::EmptyDataset, "training dataset is empty");
    if (cfg.population < 1 || cfg.generations < 0 || cfg.elites < 0 || cfg.tournament < 1)
        throw Error(ErrorCode::InvalidConfig, "GA needs population >= 1, generations >= 0, elites >= 0, tournament >= 1");
    const GaCases cases = collect_cases(train);
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double log_smin = std::log(HeuristicWeights::kSigmaMin), log_smax = std::log(HeuristicWeights::kSigmaMax);

    using detail::Genome;
    std::vector<Genome> pop(static_cast<std::size_t>(cfg.population));
    for (auto& g : pop) {
        for (auto& v : g.logw) v = gauss(rng);
        g.log_box = gauss(rng);
        g.alpha = unit(rng) * HeuristicWeights::kAlphaMax;
        g.log_sigma = log_smin + unit(rng) * (log_smax - log_smin);
    }
    auto evaluate = [&](const std::vector<Genome>& p) {
        std::vector<double> fit(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) fit[i] = case_accuracy(cases, detail::express(p[i], kind, cue_mask));
        return fit;
    };
    auto rank = [](const std::vector<double>& fit) {
        std::vector<std::size_t> idx(fit.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fit[a] > fit[b]; });
        return idx;
    };

    std::vector<double> fit = evaluate(pop);
    auto order = rank(fit);
    GaResult res;
    res.fitness_history.push_back(fit[order[0]]);
    auto pick = [&]() -> const Genome& {
        std::size_t best = static_cast<std::size_t>(unit(rng) * static_cast<double>(pop.size())) % pop.size();
        for (int t = 1; t < cfg.tournament; ++t) {
            const std::size_t c = static_cast<std::size_t>(unit(rng) * static_cast<double>(pop.size())) % pop.size();
            if (fit[c] > fit[best]) best = c;
        }
        return pop[best];
    };
    for (int gen = 0; gen < cfg.generations; ++gen) {
        std::vector<Genome> next;
        next.reserve(pop.size());
        for (int e = 0; e < std::min<int>(cfg.elites, cfg.population); ++e) next.push_back(pop[order[static_cast<std::size_t>(e)]]);
        while (next.size() < pop.size()) {
            const Genome& a = pick();
            const Genome& b = pick();
            Genome child = a;
            for (int i = 0; i < kCueCount; ++i)
                if (unit(rng) < 0.5) child.logw[static_cast<std::size_t>(i)] = b.logw[static_cast<std::size_t>(i)];
            if (unit(rng) < 0.5) child.log_box = b.log_box;
            if (unit(rng) < 0.5) child.alpha = b.alpha;
            if (unit(rng) < 0.5) child.log_sigma = b.log_sigma;
            for (auto& v : child.logw)
                if (unit(rng) < cfg.mutation_rate) v += cfg.mutation_sigma * gauss(rng);
            if (unit(rng) < cfg.mutation_rate) child.log_box += cfg.mutation_sigma * gauss(rng);
            if (unit(rng) < cfg.mutation_rate)
                child.alpha = std::clamp(child.alpha + cfg.alpha_mutation * gauss(rng), HeuristicWeights::kAlphaMin, HeuristicWeights::kAlphaMax);
            if (unit(rng) < cfg.mutation_rate)
                child.log_sigma = std::clamp(child.log_sigma + cfg.mutation_sigma * gauss(rng), log_smin, log_smax);
            next.push_back(child);
        }
        pop = std::move(next);
        fit = evaluate(pop);
        order = rank(fit);
        res.fitness_history.push_back(fit[order[0]]);
    }
    res.best = detail::express(pop[order[0]], kind, cue_mask);
    res.train_accuracy = fit[order[0]];
    res.heldout_accuracy = heldout.empty() ? 0.0 : baseline_accuracy(heldout, res.best);
    return res;
}

/// Holds out cfg.holdout of the situations, then fits on the rest.
inline GaResult fit_ga(const Dataset& data, AttentionForm kind, const GaConfig& cfg, CueSet cue_mask = kAllCues) {
    if (data.empty()) throw Error(ErrorCode::EmptyDataset, "dataset is empty");
    auto ids = data.situation_ids();
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::shuffle(ids.begin(), ids.end(), rng);
    std::size_t n_held = cfg.holdout > 0 && ids.size() > 1
                             ? std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(cfg.holdout * static_cast<double>(ids.size()))), 1,
                                                       ids.size() - 1)
                             : 0;
    const std::set<int> held(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_held));
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < data.size(); ++i) (held.count(data.situation(i)) != 0 ? te : tr).push_back(i);
    return fit_ga(data.subset(tr), data.subset(te), kind, cfg, cue_mask);
}

/// Top-n accuracy of the heuristic ranking (EA order, lowest label on ties) on every example.
inline std::array<double, 3> baseline_topn(const Dataset& data, const HeuristicWeights& h) {
    if (data.empty()) throw Error(ErrorCode::EmptyDataset, "dataset is empty");
    std::array<double, 3> hits{};
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto s = ea_score(baseline_frame(data, i), h);
        const int y = data.label(i);
        int ahead = 0;
        for (int j = 0; j < static_cast<int>(s.size()); ++j)
            if (s[static_cast<std::size_t>(j)] > s[static_cast<std::size_t>(y)] ||
                (s[static_cast<std::size_t>(j)] == s[static_cast<std::size_t>(y)] && j < y))
                ++ahead;
        for (int n = 1; n <= 3; ++n)
            if (ahead < n) hits[static_cast<std::size_t>(n - 1)] += 1;
    }
    for (auto& v : hits) v /= static_cast<double>(data.size());
    return hits;
}

}  // namespace gazectl
