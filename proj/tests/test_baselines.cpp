#include <gtest/gtest.h>

#include <random>

#include "gazectl/baselines.hpp"

using namespace gazectl;

namespace {

GazerPersona deterministic_persona(AttentionForm form) {
    GazerPersona p;
    p.form = form;
    p.temperature = 0.0;
    p.latency_ticks = 0;
    p.seed = 21;
    return p;
}

const Dataset& corpus(AttentionForm form) {
    static const Dataset product = [] {
        const std::vector<GazerPersona> ps{deterministic_persona(AttentionForm::Product)};
        return synth_corpus(canonical_timeline(Variant::TwoD), ps, 2);
    }();
    static const Dataset sum = [] {
        const std::vector<GazerPersona> ps{deterministic_persona(AttentionForm::Sum)};
        return synth_corpus(canonical_timeline(Variant::TwoD), ps, 2);
    }();
    return form == AttentionForm::Product ? product : sum;
}

HeuristicWeights from_persona(const GazerPersona& p) {
    HeuristicWeights h;
    h.kind = p.form;
    h.w = p.cue_weights;
    h.alpha = p.distance_decay;
    h.sigma_deg = p.angle_width_deg;
    h.w_box = p.box_weight;
    return h;
}

/// Accuracy computed example by example through the linear-space predictor.
double direct_accuracy(const Dataset& d, const HeuristicWeights& h) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < d.size(); ++i) hit += predict(baseline_frame(d, i), h) == d.label(i) ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(d.size());
}

}  // namespace

TEST(EffectiveAttention, ProductAndSumForms) {
    HeuristicWeights h;
    h.w = {2, 3, 5, 7, 1, 1, 1, 1};
    h.alpha = 0.5;
    h.sigma_deg = 30;
    const CueSet cues = cue_bit(Cue::Talking) | cue_bit(Cue::Pointing);
    const double kernel = std::exp(-0.5 * 2.0) * std::exp(-(20.0 * 20.0) / (2 * 900.0));
    const double w_talk = h.w[static_cast<std::size_t>(Cue::Talking)], w_point = h.w[static_cast<std::size_t>(Cue::Pointing)];
    EXPECT_NEAR(ea_value(cues, 2.0, 20.0, h), w_talk * w_point * kernel, 1e-12);
    EXPECT_NEAR(ea_value(0u, 2.0, 20.0, h), kernel, 1e-12);
    h.kind = AttentionForm::Sum;
    EXPECT_NEAR(ea_value(cues, 2.0, 20.0, h), (w_talk + w_point) * kernel, 1e-12);
    EXPECT_EQ(ea_value(0u, 2.0, 20.0, h), 0.0);
    h.cue_mask = cue_bit(Cue::Talking);
    EXPECT_NEAR(ea_value(cues, 2.0, 20.0, h), w_talk * kernel, 1e-12);
}

TEST(EffectiveAttention, ScoresAndErrors) {
    SceneFrame f;
    f.variant = Variant::ThreeD;
    try {
        ea_score(f, HeuristicWeights{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NoPresentTarget);
    }
    f.people3d[2] = {true, 1.0, Characteristic::Waving, false, 0, 10.0, -1};
    const auto s = ea_score(f, HeuristicWeights{});
    EXPECT_EQ(s[0], kAbsentScore);
    EXPECT_GT(s[2], 0.0);
    EXPECT_EQ(predict(f, HeuristicWeights{}), 2);
}

TEST(EffectiveAttention, WeightsJsonRoundTrip) {
    HeuristicWeights h;
    h.kind = AttentionForm::Sum;
    h.w[3] = 4.5;
    h.alpha = 0.25;
    h.sigma_deg = 33;
    h.w_box = 0.4;
    h.cue_mask = cue_bit(Cue::Waving) | cue_bit(Cue::Talking);
    const auto back = heuristic_from_json(to_json(h));
    EXPECT_EQ(back.kind, h.kind);
    EXPECT_EQ(back.w, h.w);
    EXPECT_EQ(back.alpha, h.alpha);
    EXPECT_EQ(back.sigma_deg, h.sigma_deg);
    EXPECT_EQ(back.w_box, h.w_box);
    EXPECT_EQ(back.cue_mask, h.cue_mask);
}

TEST(CaseAccuracy, MatchesExampleByExamplePrediction) {
    std::mt19937_64 rng(8);
    std::lognormal_distribution<double> w(0.0, 0.7);
    for (const auto form : {AttentionForm::Product, AttentionForm::Sum}) {
        const auto& d = corpus(form);
        for (int trial = 0; trial < 4; ++trial) {
            HeuristicWeights h;
            h.kind = form;
            for (auto& v : h.w) v = w(rng);
            h.w_box = w(rng);
            h.alpha = 0.3 * trial;
            h.sigma_deg = 20 + 25 * trial;
            EXPECT_NEAR(baseline_accuracy(d, h), direct_accuracy(d, h), 1e-12) << to_string(form) << " trial " << trial;
            EXPECT_NEAR(baseline_topn(d, h)[0], direct_accuracy(d, h), 1e-12);
        }
    }
}

TEST(CaseAccuracy, SumFormIsScaleInvariant) {
    const auto& d = corpus(AttentionForm::Sum);
    HeuristicWeights h = from_persona(deterministic_persona(AttentionForm::Sum));
    h.w = {1.3, 0.4, 2.2, 0.9, 1.7, 0.5, 1.1, 3.0};
    const double base = baseline_accuracy(d, h);
    for (double k : {0.01, 0.5, 7.0, 1000.0}) {
        HeuristicWeights s = h;
        for (auto& v : s.w) v *= k;
        s.w_box *= k;
        EXPECT_DOUBLE_EQ(baseline_accuracy(d, s), base) << k;
    }
}

TEST(CaseAccuracy, TopNMonotone) {
    const auto& d = corpus(AttentionForm::Product);
    const auto t = baseline_topn(d, HeuristicWeights{});
    EXPECT_LE(t[0], t[1]);
    EXPECT_LE(t[1], t[2]);
    EXPECT_LE(t[2], 1.0);
}

TEST(Ga, DegenerateSingleGenome) {
    const auto& d = corpus(AttentionForm::Product);
    GaConfig cfg;
    cfg.population = 1;
    cfg.generations = 0;
    cfg.seed = 4;
    const auto a = fit_ga(d, d, AttentionForm::Product, cfg);
    const auto b = fit_ga(d, d, AttentionForm::Product, cfg);
    ASSERT_EQ(a.fitness_history.size(), 1u);
    EXPECT_EQ(a.train_accuracy, b.train_accuracy);
    EXPECT_EQ(a.best.w, b.best.w);
    EXPECT_DOUBLE_EQ(a.train_accuracy, baseline_accuracy(d, a.best));
    EXPECT_DOUBLE_EQ(a.heldout_accuracy, a.train_accuracy);
}

TEST(Ga, ElitistFitnessNeverDecreases) {
    const auto& d = corpus(AttentionForm::Sum);
    GaConfig cfg;
    cfg.population = 20;
    cfg.generations = 15;
    cfg.seed = 2;
    const auto r = fit_ga(d, AttentionForm::Sum, cfg);
    ASSERT_EQ(r.fitness_history.size(), 16u);
    for (std::size_t g = 1; g < r.fitness_history.size(); ++g) EXPECT_GE(r.fitness_history[g], r.fitness_history[g - 1]);
    EXPECT_DOUBLE_EQ(r.fitness_history.back(), r.train_accuracy);
    EXPECT_GE(r.best.alpha, HeuristicWeights::kAlphaMin);
    EXPECT_LE(r.best.sigma_deg, HeuristicWeights::kSigmaMax);
}

TEST(Ga, RecoversDeterministicProductGazer) {
    const auto& d = corpus(AttentionForm::Product);
    const double truth = baseline_accuracy(d, from_persona(deterministic_persona(AttentionForm::Product)));
    EXPECT_GT(truth, 0.97);
    GaConfig cfg;
    cfg.population = 40;
    cfg.generations = 60;
    cfg.seed = 1;
    const auto r = fit_ga(d, AttentionForm::Product, cfg);
    EXPECT_GT(r.train_accuracy, 0.95);
    EXPECT_GT(r.heldout_accuracy, 0.9);
}

TEST(Ga, Errors) {
    const Dataset empty(make_meta(Variant::TwoD, 2));
    EXPECT_THROW(fit_ga(empty, AttentionForm::Sum, GaConfig{}), Error);
    EXPECT_THROW(baseline_accuracy(empty, HeuristicWeights{}), Error);
    GaConfig bad;
    bad.population = 0;
    EXPECT_THROW(fit_ga(corpus(AttentionForm::Sum), AttentionForm::Sum, bad), Error);
}
