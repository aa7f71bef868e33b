#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gazectl/error.hpp"
#include "gazectl/eval.hpp"
#include "gazectl/features.hpp"
#include "gazectl/models.hpp"
#include "gazectl/numcore/params.hpp"

namespace gazectl {

struct TrainConfig {
    double lr = 0.001;
    std::size_t batch_size = 20;
    int patience = 10;
    int max_epochs = 200;
    std::uint64_t seed = 0;
    bool shuffle = true;
    /// Fraction of training situations held out for early stopping; 0 stops on the test fold.
    double holdout = 0.0;

    void validate() const {
        if (!(lr > 0)) throw Error(ErrorCode::InvalidConfig, "lr must be > 0");
        if (batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch_size must be >= 1");
        if (patience < 0) throw Error(ErrorCode::InvalidConfig, "patience must be >= 0");
        if (max_epochs < 1) throw Error(ErrorCode::InvalidConfig, "max_epochs must be >= 1");
        if (holdout < 0 || holdout >= 1) throw Error(ErrorCode::InvalidConfig, "holdout must be in [0, 1)");
    }
};

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"lr", c.lr},           {"batch_size", c.batch_size}, {"patience", c.patience}, {"max_epochs", c.max_epochs},
            {"seed", c.seed},       {"shuffle", c.shuffle},       {"holdout", c.holdout}};
}

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0;
    double train_acc = 0;
    double eval_acc = 0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = -1;
    std::string stop_reason;

    double best_eval_acc() const { return best_epoch < 0 ? 0.0 : epochs[static_cast<std::size_t>(best_epoch)].eval_acc; }

    std::string to_csv() const {
        std::ostringstream os;
        os << "epoch,train_loss,train_acc,eval_acc\n";
        char buf[96];
        for (const auto& e : epochs) {
            std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f\n", e.epoch, e.train_loss, e.train_acc, e.eval_acc);
            os << buf;
        }
        return os.str();
    }

    nlohmann::json to_json() const {
        nlohmann::json j = {{"epochs", epochs.size()}, {"best_epoch", best_epoch}, {"stop_reason", stop_reason}};
        if (best_epoch >= 0) {
            const auto& best = epochs[static_cast<std::size_t>(best_epoch)];
            j["best"] = {{"train_loss", best.train_loss}, {"train_acc", best.train_acc}, {"eval_acc", best.eval_acc}};
            const auto& last = epochs.back();
            j["final"] = {{"train_loss", last.train_loss}, {"train_acc", last.train_acc}, {"eval_acc", last.eval_acc}};
        }
        return j;
    }

    bool operator==(const TrainHistory& o) const {
        if (best_epoch != o.best_epoch || stop_reason != o.stop_reason || epochs.size() != o.epochs.size()) return false;
        for (std::size_t i = 0; i < epochs.size(); ++i) {
            const auto& a = epochs[i];
            const auto& b = o.epochs[i];
            if (a.epoch != b.epoch || a.train_loss != b.train_loss || a.train_acc != b.train_acc || a.eval_acc != b.eval_acc)
                return false;
        }
        return true;
    }
};

using EpochCallback = std::function<void(const EpochRecord&)>;

inline void require_compatible(const Dataset& d, int m, int L, int C, const char* which) {
    if (d.m() != m || d.width() != L || d.classes() != C)
        throw Error(ErrorCode::ShapeMismatch, std::string(which) + " dataset (m=" + std::to_string(d.m()) +
                                                  ", L=" + std::to_string(d.width()) + ", C=" + std::to_string(d.classes()) +
                                                  ") does not match the model (m=" + std::to_string(m) + ", L=" +
                                                  std::to_string(L) + ", C=" + std::to_string(C) + ")");
}

inline std::vector<int> labels_of(const Dataset& d) {
    std::vector<int> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = d.label(i);
    return out;
}

template <class T>
double top1_accuracy(SequenceModel<T>& model, const Dataset& data) {
    const auto probs = predict_dataset(model, data);
    const auto labels = labels_of(data);
    return topn_accuracy(probs, static_cast<std::size_t>(model.C()), labels, 1);
}

/// Adam on cross-entropy with early stopping on `eval` top-1 accuracy. On return the model
/// holds the parameters of the best eval epoch.
template <class T>
TrainHistory fit(SequenceModel<T>& model, const Dataset& train, const Dataset& eval, const TrainConfig& cfg,
                 const EpochCallback& on_epoch = {}) {
    cfg.validate();
    require_compatible(train, model.m(), model.L(), model.C(), "training");
    require_compatible(eval, model.m(), model.L(), model.C(), "evaluation");
    if (train.empty()) throw Error(ErrorCode::EmptyDataset, "training dataset is empty");
    if (eval.empty()) throw Error(ErrorCode::EmptyDataset, "evaluation dataset is empty");

    const nc::AdamConfig adam{cfg.lr};
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto C = static_cast<std::size_t>(model.C());

    TrainHistory hist;
    std::vector<nc::Tensor<T>> best_values;
    auto snapshot = [&] {
        best_values.clear();
        for (const auto& p : model.params()) best_values.push_back(p.value);
    };
    snapshot();
    double best_acc = -1.0;
    int wait = 0;
    std::vector<int> batch_labels;
    hist.stop_reason = "max_epochs";

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            batch_labels.resize(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) batch_labels[i] = train.label(idx[i]);

            nc::Graph<T> g;
            const auto probs = model.forward(g, batch_tensor<T>(train, idx));
            const auto loss = g.cross_entropy(probs, batch_labels);
            const double lv = static_cast<double>(g.value(loss).data[0]);
            if (!std::isfinite(lv))
                throw Error(ErrorCode::NonFiniteLoss, "loss " + std::to_string(lv) + " at epoch " + std::to_string(epoch) +
                                                          ", batch starting at " + std::to_string(start));
            const auto& P = g.value(probs);
            for (std::size_t r = 0; r < idx.size(); ++r) {
                std::size_t best = 0;
                for (std::size_t c = 1; c < C; ++c)
                    if (P(r, c) > P(r, best)) best = c;
                if (static_cast<int>(best) == batch_labels[r]) ++correct;
            }
            loss_sum += lv * static_cast<double>(idx.size());
            g.backward(loss);
            nc::adam_step(model.params(), adam);
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(train.size());
        rec.train_acc = static_cast<double>(correct) / static_cast<double>(train.size());
        rec.eval_acc = top1_accuracy(model, eval);
        hist.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (rec.eval_acc > best_acc) {
            best_acc = rec.eval_acc;
            hist.best_epoch = epoch;
            wait = 0;
            snapshot();
        } else if (++wait >= std::max(cfg.patience, 1)) {
            hist.stop_reason = "patience";
            break;
        }
    }
    for (std::size_t i = 0; i < best_values.size(); ++i) model.params()[i].value = best_values[i];
    return hist;
}

/// Moves a seeded `fraction` of the training situations (at least one) into a validation set.
inline FoldSplit holdout_split(const Dataset& train, double fraction, std::uint64_t seed) {
    auto ids = train.situation_ids();
    if (ids.size() < 2) throw Error(ErrorCode::TooFewSituations, "holdout needs at least two training situations");
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(fraction * static_cast<double>(ids.size()))), 1,
                                                ids.size() - 1);
    const std::set<int> val(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> keep, held;
    for (std::size_t i = 0; i < train.size(); ++i) (val.count(train.situation(i)) != 0 ? held : keep).push_back(i);
    return {train.subset(keep), train.subset(held)};
}

template <class T>
std::array<double, kMaxAttempts> topn_all(SequenceModel<T>& model, const Dataset& data) {
    const auto probs = predict_dataset(model, data);
    const auto labels = labels_of(data);
    std::array<double, kMaxAttempts> out{};
    for (int n = 1; n <= kMaxAttempts; ++n)
        out[static_cast<std::size_t>(n - 1)] =
            n <= model.C() ? topn_accuracy(probs, static_cast<std::size_t>(model.C()), labels, n) : 1.0;
    return out;
}

using ModelBuilder = std::function<SequenceModel<float>(std::uint64_t seed)>;

struct KFoldRun {
    KFoldOutput output;
    std::vector<TrainHistory> histories;
};

struct KFoldOptions {
    /// Folds to train; empty means all.
    std::vector<int> only_folds;
    /// Called after each fold with its accuracies and history.
    std::function<void(const FoldAccuracy&, const TrainHistory&)> on_fold;
    EpochCallback on_epoch;
};

/// Trains one model per fold (seed = config.seed + fold) and records top-1..3 accuracy
/// on the fold's train and test examples.
inline KFoldRun run_kfold(const Dataset& data, const FoldPlan& plan, const ModelBuilder& build, const TrainConfig& cfg,
                          const std::string& arch, const KFoldOptions& opt = {}) {
    if (static_cast<int>(plan.test_situations.size()) != plan.k)
        throw Error(ErrorCode::InvalidConfig, "fold plan has " + std::to_string(plan.test_situations.size()) + " folds, k=" +
                                                  std::to_string(plan.k));
    for (const int id : data.situation_ids())
        if (plan.fold_of(id) < 0) throw Error(ErrorCode::InvalidConfig, "situation " + std::to_string(id) + " is in no fold");
    KFoldRun run;
    run.output.arch = arch;
    run.output.variant = data.meta().variant;
    run.output.m = data.m();
    for (int f = 0; f < plan.k; ++f) {
        if (!opt.only_folds.empty() && std::find(opt.only_folds.begin(), opt.only_folds.end(), f) == opt.only_folds.end()) continue;
        auto split = split_fold(data, plan, f);
        TrainConfig fc = cfg;
        fc.seed = cfg.seed + static_cast<std::uint64_t>(f);
        auto model = build(fc.seed);
        TrainHistory hist;
        if (cfg.holdout > 0) {
            auto inner = holdout_split(split.train, cfg.holdout, fc.seed);
            hist = fit(model, inner.train, inner.test, fc, opt.on_epoch);
        } else {
            hist = fit(model, split.train, split.test, fc, opt.on_epoch);
        }
        FoldAccuracy acc;
        acc.fold = f;
        acc.train = topn_all(model, split.train);
        acc.test = topn_all(model, split.test);
        acc.train_examples = split.train.size();
        acc.test_examples = split.test.size();
        if (opt.on_fold) opt.on_fold(acc, hist);
        run.output.folds.push_back(acc);
        run.histories.push_back(std::move(hist));
    }
    return run;
}

}  // namespace gazectl
