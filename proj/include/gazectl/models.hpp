#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "gazectl/error.hpp"
#include "gazectl/features.hpp"
#include "gazectl/numcore/graph.hpp"
#include "gazectl/numcore/params.hpp"
#include "gazectl/numcore/tensor.hpp"

namespace gazectl {

enum class Architecture { Lstm, Transformer };

inline std::string to_string(Architecture a) { return a == Architecture::Lstm ? "lstm" : "transformer"; }

inline Architecture parse_architecture(const std::string& s) {
    if (s == "lstm") return Architecture::Lstm;
    if (s == "transformer") return Architecture::Transformer;
    throw Error(ErrorCode::SchemaError, "unknown architecture '" + s + "'");
}

struct LstmConfig {
    int m = 24;
    int L = 28;
    int C = 5;
    int units = 64;
    int layers = 2;

    bool operator==(const LstmConfig&) const = default;
};

struct TransformerConfig {
    int m = 12;
    int L = 28;
    int C = 5;
    int blocks = 2;
    int heads = 2;
    /// 0 means "equal to L".
    int head_size = 0;
    int ffn_hidden = 1024;
    /// Skip connection around the encoder stack adds the position-encoded input (true)
    /// or the raw input (false).
    bool skip_uses_encoded_input = true;
    /// Swish on the second FFN layer as well as the first.
    bool ffn_output_swish = true;

    int key_dim() const { return head_size > 0 ? head_size : L; }
    bool operator==(const TransformerConfig&) const = default;
};

using ModelConfig = std::variant<LstmConfig, TransformerConfig>;

inline Architecture architecture_of(const ModelConfig& c) {
    return std::holds_alternative<LstmConfig>(c) ? Architecture::Lstm : Architecture::Transformer;
}

/// Closed-form trainable-parameter counts.
inline std::size_t lstm_parameter_count(const LstmConfig& c) {
    std::size_t total = 0;
    std::size_t in = static_cast<std::size_t>(c.L);
    const auto U = static_cast<std::size_t>(c.units);
    for (int l = 0; l < c.layers; ++l) {
        total += 4 * (U * (in + U) + U);
        in = U;
    }
    return total + U * static_cast<std::size_t>(c.C) + static_cast<std::size_t>(c.C);
}

inline std::size_t transformer_parameter_count(const TransformerConfig& c) {
    const auto L = static_cast<std::size_t>(c.L), m = static_cast<std::size_t>(c.m);
    const auto hd = static_cast<std::size_t>(c.heads * c.key_dim());
    const auto F = static_cast<std::size_t>(c.ffn_hidden);
    const std::size_t attention = 3 * (L * hd + hd) + (hd * L + L);
    const std::size_t norms = 2 * (2 * L);
    const std::size_t ffn = (L * F + F) + (F * L + L);
    return m * L + static_cast<std::size_t>(c.blocks) * (attention + norms + ffn) + L * static_cast<std::size_t>(c.C) +
           static_cast<std::size_t>(c.C);
}

inline void validate(const ModelConfig& cfg) {
    auto bad = [](const std::string& why) { throw Error(ErrorCode::InvalidConfig, why); };
    if (const auto* l = std::get_if<LstmConfig>(&cfg)) {
        if (l->m < 1 || l->L < 1 || l->C < 1) bad("LSTM m, L, C must be >= 1");
        if (l->units < 1 || l->layers < 1) bad("LSTM units and layers must be >= 1");
    } else {
        const auto& t = std::get<TransformerConfig>(cfg);
        if (t.m < 1 || t.L < 1 || t.C < 1) bad("transformer m, L, C must be >= 1");
        if (t.blocks < 1 || t.heads < 1 || t.key_dim() < 1 || t.ffn_hidden < 1) bad("transformer blocks, heads, head size, ffn width must be >= 1");
    }
}

inline nlohmann::json config_to_json(const ModelConfig& cfg) {
    if (const auto* l = std::get_if<LstmConfig>(&cfg))
        return {{"m", l->m}, {"L", l->L}, {"C", l->C}, {"units", l->units}, {"layers", l->layers}};
    const auto& t = std::get<TransformerConfig>(cfg);
    return {{"m", t.m},
            {"L", t.L},
            {"C", t.C},
            {"blocks", t.blocks},
            {"heads", t.heads},
            {"head_size", t.key_dim()},
            {"ffn_hidden", t.ffn_hidden},
            {"skip_uses_encoded_input", t.skip_uses_encoded_input},
            {"ffn_output_swish", t.ffn_output_swish}};
}

inline ModelConfig config_from_json(Architecture arch, const nlohmann::json& j) {
    if (arch == Architecture::Lstm)
        return LstmConfig{j.at("m").get<int>(), j.at("L").get<int>(), j.at("C").get<int>(), j.at("units").get<int>(),
                          j.at("layers").get<int>()};
    TransformerConfig t;
    t.m = j.at("m").get<int>();
    t.L = j.at("L").get<int>();
    t.C = j.at("C").get<int>();
    t.blocks = j.at("blocks").get<int>();
    t.heads = j.at("heads").get<int>();
    t.head_size = j.at("head_size").get<int>();
    t.ffn_hidden = j.at("ffn_hidden").get<int>();
    t.skip_uses_encoded_input = j.value("skip_uses_encoded_input", true);
    t.ffn_output_swish = j.value("ffn_output_swish", true);
    return t;
}

/// An LSTM stack or transformer encoder classifying (m, L) windows into C labels.
/// T = float for training, double for gradient verification.
template <class T>
class SequenceModel {
   public:
    using Graph = nc::Graph<T>;
    using Var = nc::Var;

    SequenceModel() = default;

    static SequenceModel build(const ModelConfig& cfg, std::uint64_t seed) {
        validate(cfg);
        SequenceModel model;
        model.config_ = cfg;
        model.declare();
        model.initialize(seed);
        return model;
    }

    /// Same architecture with parameters declared (zero-valued) but not initialized;
    /// used when loading checkpoints.
    static SequenceModel empty(const ModelConfig& cfg) {
        validate(cfg);
        SequenceModel model;
        model.config_ = cfg;
        model.declare();
        return model;
    }

    Architecture architecture() const { return architecture_of(config_); }
    const ModelConfig& config() const { return config_; }
    int m() const { return std::visit([](const auto& c) { return c.m; }, config_); }
    int L() const { return std::visit([](const auto& c) { return c.L; }, config_); }
    int C() const { return std::visit([](const auto& c) { return c.C; }, config_); }
    nc::ParamSet<T>& params() { return params_; }
    const nc::ParamSet<T>& params() const { return params_; }
    std::size_t parameter_count() const { return params_.count(); }

    /// `batch` is n x (m*L), each row one window in (time, feature) order. Returns n x C
    /// probabilities. When `attention` is given, every head's attention matrix is appended.
    Var forward(Graph& g, const nc::Tensor<T>& batch, std::vector<nc::Tensor<T>>* attention = nullptr) {
        const auto width = static_cast<std::size_t>(m() * L());
        if (batch.cols() != width)
            throw Error(ErrorCode::ShapeMismatch, "batch " + nc::shape_str(batch.shape) + " does not match window " +
                                                      std::to_string(m()) + "x" + std::to_string(L()));
        if (architecture() == Architecture::Lstm) return forward_lstm(g, batch);
        return forward_transformer(g, batch, attention);
    }

    /// Inference without a recorded tape.
    nc::Tensor<T> predict(const nc::Tensor<T>& batch) {
        Graph g(false);
        return g.value(forward(g, batch));
    }

    template <class U>
    SequenceModel<U> cast() const {
        auto out = SequenceModel<U>::empty(config_);
        for (std::size_t i = 0; i < params_.size(); ++i) out.params()[i].value = params_[i].value.template cast<U>();
        return out;
    }

   private:
    void declare() {
        if (const auto* l = std::get_if<LstmConfig>(&config_)) {
            auto in = static_cast<std::size_t>(l->L);
            const auto U = static_cast<std::size_t>(l->units);
            for (int layer = 0; layer < l->layers; ++layer) {
                const std::string p = "lstm" + std::to_string(layer) + "/";
                params_.add(p + "kernel", {in, 4 * U});
                params_.add(p + "recurrent_kernel", {U, 4 * U});
                params_.add(p + "bias", {1, 4 * U});
                in = U;
            }
            params_.add("dense/kernel", {U, static_cast<std::size_t>(l->C)});
            params_.add("dense/bias", {1, static_cast<std::size_t>(l->C)});
            return;
        }
        const auto& t = std::get<TransformerConfig>(config_);
        const auto L = static_cast<std::size_t>(t.L);
        const auto hd = static_cast<std::size_t>(t.heads * t.key_dim());
        const auto F = static_cast<std::size_t>(t.ffn_hidden);
        params_.add("pos_embedding", {static_cast<std::size_t>(t.m), L});
        for (int b = 0; b < t.blocks; ++b) {
            const std::string p = "block" + std::to_string(b) + "/";
            for (const char* proj : {"query", "key", "value"}) {
                params_.add(p + proj + "/kernel", {L, hd});
                params_.add(p + proj + "/bias", {1, hd});
            }
            params_.add(p + "attention_output/kernel", {hd, L});
            params_.add(p + "attention_output/bias", {1, L});
            params_.add(p + "norm1/gamma", {1, L});
            params_.add(p + "norm1/beta", {1, L});
            params_.add(p + "ffn1/kernel", {L, F});
            params_.add(p + "ffn1/bias", {1, F});
            params_.add(p + "ffn2/kernel", {F, L});
            params_.add(p + "ffn2/bias", {1, L});
            params_.add(p + "norm2/gamma", {1, L});
            params_.add(p + "norm2/beta", {1, L});
        }
        params_.add("dense/kernel", {L, static_cast<std::size_t>(t.C)});
        params_.add("dense/bias", {1, static_cast<std::size_t>(t.C)});
    }

    void initialize(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        for (auto& p : params_) {
            auto& v = p.value;
            const auto& name = p.name;
            auto ends_with = [&](const std::string& suffix) {
                return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
            };
            if (ends_with("kernel")) {
                nc::glorot_uniform(v, v.shape[0], v.shape[1], rng);
            } else if (ends_with("gamma")) {
                std::fill(v.data.begin(), v.data.end(), T(1));
            } else if (name == "pos_embedding") {
                nc::uniform_fill(v, 0.05, rng);
            } else if (ends_with("bias") && name.rfind("lstm", 0) == 0) {
                // unit forget-gate bias: gate order is input, forget, cell, output
                const std::size_t U = v.size() / 4;
                std::fill(v.data.begin() + static_cast<std::ptrdiff_t>(U), v.data.begin() + static_cast<std::ptrdiff_t>(2 * U), T(1));
            }
        }
    }

    Var P(Graph& g, const std::string& name) { return g.param(params_, params_.index_of(name)); }

    Var forward_lstm(Graph& g, const nc::Tensor<T>& batch) {
        const auto& cfg = std::get<LstmConfig>(config_);
        const std::size_t n = batch.rows(), m = static_cast<std::size_t>(cfg.m), L = static_cast<std::size_t>(cfg.L);
        const auto U = static_cast<std::size_t>(cfg.units);
        // time-major copy: row t*n + b holds window b at time t
        nc::Tensor<T> tm = nc::Tensor<T>::matrix(m * n, L);
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t t = 0; t < m; ++t)
                std::copy_n(batch.data.data() + b * m * L + t * L, L, tm.data.data() + (t * n + b) * L);
        Var seq = g.constant(std::move(tm));
        Var h{};
        for (int layer = 0; layer < cfg.layers; ++layer) {
            const std::string p = "lstm" + std::to_string(layer) + "/";
            const Var Wx = P(g, p + "kernel"), Wh = P(g, p + "recurrent_kernel"), bias = P(g, p + "bias");
            const Var xw = g.add_row(g.matmul(seq, Wx), bias);
            const bool last = layer + 1 == cfg.layers;
            std::vector<Var> outputs;
            Var c{};
            for (std::size_t t = 0; t < m; ++t) {
                Var z = g.slice_rows(xw, t * n, n);
                if (t > 0) z = g.add(z, g.matmul(h, Wh));
                const Var i = g.sigmoid(g.slice_cols(z, 0, U));
                const Var f = g.sigmoid(g.slice_cols(z, U, U));
                const Var cand = g.tanh(g.slice_cols(z, 2 * U, U));
                const Var o = g.sigmoid(g.slice_cols(z, 3 * U, U));
                c = t > 0 ? g.add(g.mul(f, c), g.mul(i, cand)) : g.mul(i, cand);
                h = g.mul(o, g.tanh(c));
                if (!last) outputs.push_back(h);
            }
            if (!last) seq = g.concat_rows(outputs);
        }
        return g.softmax_rows(g.add_row(g.matmul(h, P(g, "dense/kernel")), P(g, "dense/bias")));
    }

    Var forward_transformer(Graph& g, const nc::Tensor<T>& batch, std::vector<nc::Tensor<T>>* attention) {
        const auto& cfg = std::get<TransformerConfig>(config_);
        const std::size_t n = batch.rows(), m = static_cast<std::size_t>(cfg.m), L = static_cast<std::size_t>(cfg.L);
        const auto d = static_cast<std::size_t>(cfg.key_dim());
        const auto H = static_cast<std::size_t>(cfg.heads);
        const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(d));
        // example-major rows: row b*m + t
        const Var x = g.constant(nc::Tensor<T>(nc::Shape{n * m, L}, batch.data));
        const Var encoded = g.add_tiled(x, P(g, "pos_embedding"));
        Var z = encoded;
        for (int b = 0; b < cfg.blocks; ++b) {
            const std::string p = "block" + std::to_string(b) + "/";
            const Var q = g.add_row(g.matmul(z, P(g, p + "query/kernel")), P(g, p + "query/bias"));
            const Var k = g.add_row(g.matmul(z, P(g, p + "key/kernel")), P(g, p + "key/bias"));
            const Var v = g.add_row(g.matmul(z, P(g, p + "value/kernel")), P(g, p + "value/bias"));
            std::vector<Var> per_example;
            per_example.reserve(n);
            for (std::size_t e = 0; e < n; ++e) {
                std::vector<Var> heads;
                heads.reserve(H);
                for (std::size_t h = 0; h < H; ++h) {
                    const Var qh = g.block(q, e * m, m, h * d, d);
                    const Var kh = g.block(k, e * m, m, h * d, d);
                    const Var vh = g.block(v, e * m, m, h * d, d);
                    const Var weights = g.softmax_rows(g.scale(g.matmul_nt(qh, kh), inv_sqrt_d));
                    if (attention != nullptr) attention->push_back(g.value(weights));
                    heads.push_back(g.matmul(weights, vh));
                }
                per_example.push_back(H == 1 ? heads[0] : g.concat_cols(heads));
            }
            const Var context = n == 1 ? per_example[0] : g.concat_rows(per_example);
            const Var attn = g.add_row(g.matmul(context, P(g, p + "attention_output/kernel")), P(g, p + "attention_output/bias"));
            const Var z1 = g.layer_norm_rows(g.add(z, attn), P(g, p + "norm1/gamma"), P(g, p + "norm1/beta"));
            const Var hidden = g.swish(g.add_row(g.matmul(z1, P(g, p + "ffn1/kernel")), P(g, p + "ffn1/bias")));
            Var ffn = g.add_row(g.matmul(hidden, P(g, p + "ffn2/kernel")), P(g, p + "ffn2/bias"));
            if (cfg.ffn_output_swish) ffn = g.swish(ffn);
            z = g.layer_norm_rows(g.add(z1, ffn), P(g, p + "norm2/gamma"), P(g, p + "norm2/beta"));
        }
        const Var merged = g.add(z, cfg.skip_uses_encoded_input ? encoded : x);
        const Var pooled = g.group_max_rows(merged, m);
        return g.softmax_rows(g.add_row(g.matmul(pooled, P(g, "dense/kernel")), P(g, "dense/bias")));
    }

    ModelConfig config_;
    nc::ParamSet<T> params_;
};

template <class T>
SequenceModel<T> build_lstm(const LstmConfig& cfg, std::uint64_t seed) {
    return SequenceModel<T>::build(cfg, seed);
}

template <class T>
SequenceModel<T> build_transformer(const TransformerConfig& cfg, std::uint64_t seed) {
    return SequenceModel<T>::build(cfg, seed);
}

/// Windows at `indices` stacked into an n x (m*L) batch.
template <class T>
nc::Tensor<T> batch_tensor(const Dataset& data, std::span<const std::size_t> indices) {
    const auto width = static_cast<std::size_t>(data.m() * data.width());
    nc::Tensor<T> out = nc::Tensor<T>::matrix(indices.size(), width);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto w = data.window(indices[r]);
        std::copy(w.begin(), w.end(), out.data.begin() + static_cast<std::ptrdiff_t>(r * width));
    }
    return out;
}

/// Probabilities for every example, evaluated in chunks. Row-major N x C.
template <class T>
std::vector<double> predict_dataset(SequenceModel<T>& model, const Dataset& data, std::size_t chunk = 64) {
    if (data.m() != model.m() || data.width() != model.L() || data.classes() != model.C())
        throw Error(ErrorCode::ShapeMismatch, "dataset (m=" + std::to_string(data.m()) + ", L=" + std::to_string(data.width()) +
                                                  ", C=" + std::to_string(data.classes()) + ") does not fit the model");
    std::vector<double> out;
    out.reserve(data.size() * static_cast<std::size_t>(model.C()));
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.size(); start += chunk) {
        idx.clear();
        for (std::size_t i = start; i < std::min(data.size(), start + chunk); ++i) idx.push_back(i);
        const auto probs = model.predict(batch_tensor<T>(data, idx));
        out.insert(out.end(), probs.data.begin(), probs.data.end());
    }
    return out;
}

}  // namespace gazectl
