#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "gazectl/error.hpp"
#include "gazectl/scene.hpp"

namespace gazectl {

/// True when `label` ranks among the n highest probabilities of `row`.
/// Equal probabilities rank by lower label index first.
inline bool in_top_n(std::span<const double> row, int label, int n) {
    const double p = row[static_cast<std::size_t>(label)];
    int ahead = 0;
    for (int j = 0; j < static_cast<int>(row.size()); ++j) {
        const double q = row[static_cast<std::size_t>(j)];
        if (q > p || (q == p && j < label)) ++ahead;
    }
    return ahead < n;
}

/// Fraction of samples whose true label is within the n most probable labels.
/// `probs` is row-major (samples x C).
inline double topn_accuracy(std::span<const double> probs, std::size_t C, std::span<const int> labels, int n) {
    if (C == 0 || n < 1 || n > static_cast<int>(C))
        throw Error(ErrorCode::BadN, "n=" + std::to_string(n) + " outside 1.." + std::to_string(C));
    if (probs.size() != labels.size() * C)
        throw Error(ErrorCode::LengthMismatch,
                    std::to_string(probs.size()) + " probabilities for " + std::to_string(labels.size()) + " labels");
    if (labels.empty()) throw Error(ErrorCode::EmptyInput, "no samples");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (in_top_n(probs.subspan(i * C, C), labels[i], n)) ++hits;
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

/// Row-wise argmax, lowest index on ties.
inline std::vector<int> argmax_rows(std::span<const double> probs, std::size_t C) {
    std::vector<int> out(probs.size() / C);
    for (std::size_t i = 0; i < out.size(); ++i) {
        int best = 0;
        for (std::size_t j = 1; j < C; ++j)
            if (probs[i * C + j] > probs[i * C + static_cast<std::size_t>(best)]) best = static_cast<int>(j);
        out[i] = best;
    }
    return out;
}

/// C x C counts; row = true label, column = prediction.
inline std::vector<std::vector<long>> confusion(std::span<const int> predictions, std::span<const int> labels, int C) {
    if (predictions.size() != labels.size())
        throw Error(ErrorCode::LengthMismatch,
                    std::to_string(predictions.size()) + " predictions for " + std::to_string(labels.size()) + " labels");
    std::vector<std::vector<long>> m(static_cast<std::size_t>(C), std::vector<long>(static_cast<std::size_t>(C), 0));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= C || predictions[i] < 0 || predictions[i] >= C)
            throw Error(ErrorCode::OutOfRange, "label outside 0.." + std::to_string(C - 1) + " at sample " + std::to_string(i));
        ++m[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(predictions[i])];
    }
    return m;
}

struct MeanStd {
    double mean = 0;
    double std = 0;
};

/// Mean and sample (n-1) standard deviation; std is 0 for a single value.
inline MeanStd mean_std(std::span<const double> xs) {
    if (xs.empty()) throw Error(ErrorCode::EmptyInput, "mean of nothing");
    double sum = 0;
    for (double x : xs) sum += x;
    const double mean = sum / static_cast<double>(xs.size());
    if (xs.size() == 1) return {mean, 0.0};
    double ss = 0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

inline constexpr int kMaxAttempts = 3;

struct FoldAccuracy {
    int fold = 0;
    std::array<double, kMaxAttempts> train{};
    std::array<double, kMaxAttempts> test{};
    std::size_t train_examples = 0;
    std::size_t test_examples = 0;
};

/// Per-fold top-n accuracies of one model family at one window length.
struct KFoldOutput {
    std::string arch;
    Variant variant = Variant::TwoD;
    int m = 0;
    std::vector<FoldAccuracy> folds;
};

inline nlohmann::json to_json(const KFoldOutput& k) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : k.folds)
        folds.push_back({{"fold", f.fold},
                         {"train", f.train},
                         {"test", f.test},
                         {"train_examples", f.train_examples},
                         {"test_examples", f.test_examples}});
    return {{"arch", k.arch}, {"variant", to_string(k.variant)}, {"m", k.m}, {"folds", folds}};
}

inline KFoldOutput kfold_from_json(const nlohmann::json& j) {
    KFoldOutput k;
    try {
        k.arch = j.at("arch").get<std::string>();
        k.variant = parse_variant(j.at("variant").get<std::string>());
        k.m = j.at("m").get<int>();
        for (const auto& f : j.at("folds")) {
            FoldAccuracy fa;
            fa.fold = f.at("fold").get<int>();
            fa.train = f.at("train").get<std::array<double, kMaxAttempts>>();
            fa.test = f.at("test").get<std::array<double, kMaxAttempts>>();
            fa.train_examples = f.value("train_examples", std::size_t{0});
            fa.test_examples = f.value("test_examples", std::size_t{0});
            k.folds.push_back(fa);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("fold output: ") + e.what());
    }
    return k;
}

struct ReportRow {
    std::string arch;
    Variant variant = Variant::TwoD;
    int m = 0;
    std::string split;
    int n = 1;
    double mean = 0;
    double std = 0;
    int folds = 0;
};

struct AccuracyReport {
    std::vector<ReportRow> rows;

    std::string to_csv() const {
        std::ostringstream os;
        os << "arch,variant,m,split,n,mean,std,folds\n";
        char buf[64];
        for (const auto& r : rows) {
            os << r.arch << ',' << to_string(r.variant) << ',' << r.m << ',' << r.split << ',' << r.n << ',';
            std::snprintf(buf, sizeof buf, "%.6f,%.6f", r.mean, r.std);
            os << buf << ',' << r.folds << '\n';
        }
        return os.str();
    }

    nlohmann::json to_json() const {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& r : rows)
            out.push_back({{"arch", r.arch},
                           {"variant", to_string(r.variant)},
                           {"m", r.m},
                           {"split", r.split},
                           {"n", r.n},
                           {"mean", r.mean},
                           {"std", r.std},
                           {"folds", r.folds}});
        return out;
    }

    /// One series per (arch, variant, m, split): x = detection attempts, y = mean accuracy.
    nlohmann::json plot_data() const {
        std::map<std::tuple<std::string, std::string, int, std::string>, nlohmann::json> series;
        for (const auto& r : rows) {
            auto& s = series[{r.arch, to_string(r.variant), r.m, r.split}];
            if (s.is_null())
                s = {{"arch", r.arch}, {"variant", to_string(r.variant)}, {"m", r.m}, {"split", r.split},
                     {"x", nlohmann::json::array()}, {"y", nlohmann::json::array()}, {"err", nlohmann::json::array()}};
            s["x"].push_back(r.n);
            s["y"].push_back(r.mean);
            s["err"].push_back(r.std);
        }
        nlohmann::json out = {{"x_label", "detection attempts"}, {"y_label", "accuracy"}, {"series", nlohmann::json::array()}};
        for (auto& [key, s] : series) out["series"].push_back(std::move(s));
        return out;
    }
};

/// Rows ordered by input order, then split (train, test), then n.
inline AccuracyReport build_report(std::span<const KFoldOutput> outputs) {
    AccuracyReport rep;
    for (const auto& k : outputs) {
        if (k.folds.empty()) continue;
        for (const char* split : {"train", "test"}) {
            for (int n = 1; n <= kMaxAttempts; ++n) {
                std::vector<double> xs;
                for (const auto& f : k.folds) xs.push_back((std::string(split) == "train" ? f.train : f.test)[static_cast<std::size_t>(n - 1)]);
                const auto ms = mean_std(xs);
                rep.rows.push_back({k.arch, k.variant, k.m, split, n, ms.mean, ms.std, static_cast<int>(k.folds.size())});
            }
        }
    }
    return rep;
}

}  // namespace gazectl
