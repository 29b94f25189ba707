#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "supertracy/errors.hpp"
#include "supertracy/matrix.hpp"
#include "supertracy/rng.hpp"
#include "supertracy/seq_model.hpp"

namespace supertracy::compress {

// Uniform affine quantization of one matrix: codes are b-bit unsigned
// integers on the grid w_min + code * delta with delta = (max-min)/(2^b - 1).
struct QuantizedMatrix {
    std::vector<uint32_t> codes;
    double w_min = 0.0;
    double delta = 0.0;
    int bits = 0;
    size_t rows = 0;
    size_t cols = 0;
};

// Rounding rule: round half away from zero. The argument of the rounding is
// never negative here, so std::round implements it exactly. A degenerate
// range (max == min) maps to delta 0 with all codes 0 and reconstructs
// exactly.
inline QuantizedMatrix quantize(const Matrix& W, int bits) {
    if (bits < 1) throw InvalidBitWidth("bit width must be at least 1");
    if (W.empty()) throw EmptyMatrix("cannot quantize an empty matrix");
    QuantizedMatrix q;
    q.bits = bits;
    q.rows = W.rows();
    q.cols = W.cols();
    q.w_min = W.min_value();
    double w_max = W.max_value();
    double levels = std::pow(2.0, bits) - 1.0;
    if (w_max == q.w_min) {
        q.delta = 0.0;
        q.codes.assign(W.size(), 0);
        return q;
    }
    q.delta = (w_max - q.w_min) / levels;
    q.codes.resize(W.size());
    const auto& data = W.data();
    for (size_t i = 0; i < data.size(); ++i) {
        double code = std::round((data[i] - q.w_min) / q.delta);
        if (code < 0.0) code = 0.0;
        if (code > levels) code = levels;
        q.codes[i] = static_cast<uint32_t>(code);
    }
    return q;
}

inline Matrix dequantize(const QuantizedMatrix& q) {
    Matrix W(q.rows, q.cols);
    auto& data = W.data();
    for (size_t i = 0; i < q.codes.size(); ++i)
        data[i] = static_cast<double>(q.codes[i]) * q.delta + q.w_min;
    return W;
}

// Quantized parameter bundle. Weight matrices are quantized; bias vectors
// stay full precision.
struct QuantizedModel {
    int bits = 0;
    int d_model = 0;
    int n_heads = 0;
    int d_ff = 0;
    int max_positions = 0;
    std::map<std::string, QuantizedMatrix> matrices;
    std::vector<double> b_1;
    std::vector<double> b_2;
    std::vector<double> b_out;
};

inline QuantizedModel quantize_model(const seq_model::ModelParams& params, int bits) {
    if (bits < 1) throw InvalidBitWidth("bit width must be at least 1");
    QuantizedModel q;
    q.bits = bits;
    q.d_model = params.d_model;
    q.n_heads = params.n_heads;
    q.d_ff = params.d_ff;
    q.max_positions = params.max_positions;
    q.matrices["E"] = quantize(params.E, bits);
    q.matrices["P"] = quantize(params.P, bits);
    for (int h = 0; h < params.n_heads; ++h) {
        q.matrices["W_q" + std::to_string(h)] = quantize(params.W_q[static_cast<size_t>(h)], bits);
        q.matrices["W_k" + std::to_string(h)] = quantize(params.W_k[static_cast<size_t>(h)], bits);
        q.matrices["W_v" + std::to_string(h)] = quantize(params.W_v[static_cast<size_t>(h)], bits);
    }
    q.matrices["W_o"] = quantize(params.W_o, bits);
    q.matrices["W_1"] = quantize(params.W_1, bits);
    q.matrices["W_2"] = quantize(params.W_2, bits);
    q.matrices["W_out"] = quantize(params.W_out, bits);
    q.b_1 = params.b_1;
    q.b_2 = params.b_2;
    q.b_out = params.b_out;
    return q;
}

inline seq_model::ModelParams dequantize_model(const QuantizedModel& q) {
    seq_model::ModelParams p;
    p.d_model = q.d_model;
    p.n_heads = q.n_heads;
    p.d_k = q.d_model / q.n_heads;
    p.d_ff = q.d_ff;
    p.max_positions = q.max_positions;
    p.E = dequantize(q.matrices.at("E"));
    p.P = dequantize(q.matrices.at("P"));
    for (int h = 0; h < q.n_heads; ++h) {
        p.W_q.push_back(dequantize(q.matrices.at("W_q" + std::to_string(h))));
        p.W_k.push_back(dequantize(q.matrices.at("W_k" + std::to_string(h))));
        p.W_v.push_back(dequantize(q.matrices.at("W_v" + std::to_string(h))));
    }
    p.W_o = dequantize(q.matrices.at("W_o"));
    p.W_1 = dequantize(q.matrices.at("W_1"));
    p.W_2 = dequantize(q.matrices.at("W_2"));
    p.W_out = dequantize(q.matrices.at("W_out"));
    p.b_1 = q.b_1;
    p.b_2 = q.b_2;
    p.b_out = q.b_out;
    return p;
}

// Low-rank update W ~ W_0 + A B with A (d x r) and B (r x k), r < min(d, k).
struct LoRAAdapter {
    Matrix A;
    Matrix B;
    int rank = 0;
};

inline LoRAAdapter init_adapter(size_t d, size_t k, int rank, Rng& rng) {
    if (rank < 1 || static_cast<size_t>(rank) >= std::min(d, k))
        throw ShapeMismatch("LoRA rank must satisfy 1 <= r < min(d, k)");
    LoRAAdapter a;
    a.rank = rank;
    a.A = Matrix::uniform(d, static_cast<size_t>(rank), rng, -0.01, 0.01);
    a.B = Matrix(static_cast<size_t>(rank), k, 0.0);  // zero: initial delta W is zero
    return a;
}

inline Matrix effective_weight(const Matrix& W0, const LoRAAdapter& adapter) {
    if (adapter.A.rows() != W0.rows() || adapter.B.cols() != W0.cols() ||
        adapter.A.cols() != adapter.B.rows())
        throw ShapeMismatch("effective_weight: adapter shapes do not match W0");
    Matrix delta = adapter.A.matmul(adapter.B);
    Matrix out = W0;
    out += delta;
    return out;
}

inline size_t trainable_param_count(size_t d, size_t k, size_t r) {
    return r * (d + k);
}

// Adapters cover the attention projections and the output head; embeddings
// and the FFN stay frozen.
struct LoRAAdapterSet {
    std::vector<LoRAAdapter> q;  // per head
    std::vector<LoRAAdapter> k;
    std::vector<LoRAAdapter> v;
    LoRAAdapter out;
    int rank = 0;

    static LoRAAdapterSet init(const seq_model::ModelParams& base, int rank, uint64_t seed) {
        LoRAAdapterSet s;
        s.rank = rank;
        Rng rng = Rng(seed).fork("lora-init");
        for (int h = 0; h < base.n_heads; ++h) {
            s.q.push_back(init_adapter(base.W_q[static_cast<size_t>(h)].rows(),
                                       base.W_q[static_cast<size_t>(h)].cols(), rank, rng));
            s.k.push_back(init_adapter(base.W_k[static_cast<size_t>(h)].rows(),
                                       base.W_k[static_cast<size_t>(h)].cols(), rank, rng));
            s.v.push_back(init_adapter(base.W_v[static_cast<size_t>(h)].rows(),
                                       base.W_v[static_cast<size_t>(h)].cols(), rank, rng));
        }
        s.out = init_adapter(base.W_out.rows(), base.W_out.cols(), rank, rng);
        return s;
    }

    size_t trainable_parameters() const {
        size_t n = out.A.size() + out.B.size();
        for (const auto& a : q) n += a.A.size() + a.B.size();
        for (const auto& a : k) n += a.A.size() + a.B.size();
        for (const auto& a : v) n += a.A.size() + a.B.size();
        return n;
    }
};

// Base parameters with the adapter deltas applied.
inline seq_model::ModelParams apply_adapters(const seq_model::ModelParams& base,
                                             const LoRAAdapterSet& adapters) {
    seq_model::ModelParams p = base;
    for (int h = 0; h < base.n_heads; ++h) {
        p.W_q[static_cast<size_t>(h)] =
            effective_weight(base.W_q[static_cast<size_t>(h)], adapters.q[static_cast<size_t>(h)]);
        p.W_k[static_cast<size_t>(h)] =
            effective_weight(base.W_k[static_cast<size_t>(h)], adapters.k[static_cast<size_t>(h)]);
        p.W_v[static_cast<size_t>(h)] =
            effective_weight(base.W_v[static_cast<size_t>(h)], adapters.v[static_cast<size_t>(h)]);
    }
    p.W_out = effective_weight(base.W_out, adapters.out);
    return p;
}

namespace detail {

// dW is the gradient of the effective weight; project into the factors:
// dA = dW B^T, dB = A^T dW.
inline void project_adapter_grads(const Matrix& dW, const LoRAAdapter& adapter, Matrix& dA,
                                  Matrix& dB) {
    dA = dW.matmul_transposed(adapter.B);
    dB = adapter.A.transposed().matmul(dW);
}

inline void adam_update(std::vector<double>& p, const std::vector<double>& g,
                        std::vector<double>& m, std::vector<double>& v, double lr, double beta1,
                        double beta2, double eps, int step) {
    double bc1 = 1.0 - std::pow(beta1, step);
    double bc2 = 1.0 - std::pow(beta2, step);
    for (size_t i = 0; i < p.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        p[i] -= lr * ((m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps));
    }
}

}  // namespace detail

// Fine-tunes only the adapter factors; the base parameters are never
// touched. Loss is computed with the effective weights.
inline std::pair<LoRAAdapterSet, seq_model::LossTrace> finetune_lora(
    const seq_model::ModelParams& base, LoRAAdapterSet adapters,
    const std::vector<std::vector<seq_model::EventCode>>& train_set,
    const seq_model::TrainConfig& config, const seq_model::Vocabulary& vocab) {
    if (train_set.empty()) throw EmptyTrainSet("train set is empty");

    seq_model::LossTrace trace;
    Rng order_rng = Rng(config.seed).fork("lora-batch-order");
    std::vector<size_t> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    order_rng.shuffle(order);
    size_t cursor = 0;
    auto next_sequence = [&]() -> const std::vector<seq_model::EventCode>& {
        if (cursor >= order.size()) {
            order_rng.shuffle(order);
            cursor = 0;
        }
        return train_set[order[cursor++]];
    };

    // adapter parameter list with Adam state
    std::vector<Matrix*> tensors;
    for (int h = 0; h < base.n_heads; ++h) {
        tensors.push_back(&adapters.q[static_cast<size_t>(h)].A);
        tensors.push_back(&adapters.q[static_cast<size_t>(h)].B);
        tensors.push_back(&adapters.k[static_cast<size_t>(h)].A);
        tensors.push_back(&adapters.k[static_cast<size_t>(h)].B);
        tensors.push_back(&adapters.v[static_cast<size_t>(h)].A);
        tensors.push_back(&adapters.v[static_cast<size_t>(h)].B);
    }
    tensors.push_back(&adapters.out.A);
    tensors.push_back(&adapters.out.B);
    std::vector<std::vector<double>> m_state(tensors.size()), v_state(tensors.size());
    for (size_t i = 0; i < tensors.size(); ++i) {
        m_state[i].assign(tensors[i]->size(), 0.0);
        v_state[i].assign(tensors[i]->size(), 0.0);
    }

    for (int step = 1; step <= config.total_steps; ++step) {
        seq_model::ModelParams effective = apply_adapters(base, adapters);
        seq_model::detail::Grads grads(effective);
        double loss_sum = 0.0;
        size_t token_count = 0;
        for (int micro = 0; micro < config.grad_accum_steps; ++micro) {
            for (int b = 0; b < config.batch_size; ++b) {
                const auto& seq = next_sequence();
                if (seq.empty()) continue;
                auto tokens = seq_model::detail::sequence_tokens(seq, vocab, effective);
                auto targets = seq_model::detail::sequence_targets(tokens, vocab);
                seq_model::detail::forward_backward_sequence(effective, tokens, targets, &grads,
                                                             loss_sum, token_count);
            }
        }
        double denom = token_count ? static_cast<double>(token_count) : 1.0;
        trace.push(loss_sum / denom);

        double lr_t = config.lr *
                      (1.0 - static_cast<double>(step - 1) / static_cast<double>(config.total_steps));
        size_t t = 0;
        auto update_pair = [&](LoRAAdapter& a, const Matrix& dW_raw) {
            Matrix dW = dW_raw;
            dW *= 1.0 / denom;
            Matrix dA, dB;
            detail::project_adapter_grads(dW, a, dA, dB);
            detail::adam_update(a.A.data(), dA.data(), m_state[t], v_state[t], lr_t, config.beta1,
                                config.beta2, config.adam_eps, step);
            ++t;
            detail::adam_update(a.B.data(), dB.data(), m_state[t], v_state[t], lr_t, config.beta1,
                                config.beta2, config.adam_eps, step);
            ++t;
        };
        for (int h = 0; h < base.n_heads; ++h) {
            update_pair(adapters.q[static_cast<size_t>(h)], grads.shadow.W_q[static_cast<size_t>(h)]);
            update_pair(adapters.k[static_cast<size_t>(h)], grads.shadow.W_k[static_cast<size_t>(h)]);
            update_pair(adapters.v[static_cast<size_t>(h)], grads.shadow.W_v[static_cast<size_t>(h)]);
        }
        update_pair(adapters.out, grads.shadow.W_out);
    }

    return {std::move(adapters), std::move(trace)};
}

// Versioned quantized checkpoint: per-matrix bits, w_min, delta and codes,
// plus the full-precision biases and the vocabulary.
inline nlohmann::json quantized_to_json(const QuantizedModel& q,
                                        const seq_model::Vocabulary& vocab) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["bits"] = q.bits;
    j["dims"] = {{"d_model", q.d_model},
                 {"n_heads", q.n_heads},
                 {"d_ff", q.d_ff},
                 {"max_positions", q.max_positions}};
    j["vocab"] = {{"codes", vocab.codes()}};
    nlohmann::json mats;
    for (const auto& [name, m] : q.matrices) {
        mats[name] = {{"bits", m.bits}, {"w_min", m.w_min}, {"delta", m.delta},
                      {"rows", m.rows}, {"cols", m.cols},   {"codes", m.codes}};
    }
    j["matrices"] = std::move(mats);
    j["biases"] = {{"b_1", q.b_1}, {"b_2", q.b_2}, {"b_out", q.b_out}};
    return j;
}

inline std::pair<QuantizedModel, seq_model::Vocabulary> quantized_from_json(
    const nlohmann::json& j) {
    if (j.at("format_version").get<int>() != 1)
        throw SchemaMismatch("unsupported quantized checkpoint version");
    QuantizedModel q;
    q.bits = j.at("bits").get<int>();
    q.d_model = j.at("dims").at("d_model").get<int>();
    q.n_heads = j.at("dims").at("n_heads").get<int>();
    q.d_ff = j.at("dims").at("d_ff").get<int>();
    q.max_positions = j.at("dims").at("max_positions").get<int>();
    for (auto it = j.at("matrices").begin(); it != j.at("matrices").end(); ++it) {
        QuantizedMatrix m;
        m.bits = it.value().at("bits").get<int>();
        m.w_min = it.value().at("w_min").get<double>();
        m.delta = it.value().at("delta").get<double>();
        m.rows = it.value().at("rows").get<size_t>();
        m.cols = it.value().at("cols").get<size_t>();
        m.codes = it.value().at("codes").get<std::vector<uint32_t>>();
        q.matrices[it.key()] = std::move(m);
    }
    q.b_1 = j.at("biases").at("b_1").get<std::vector<double>>();
    q.b_2 = j.at("biases").at("b_2").get<std::vector<double>>();
    q.b_out = j.at("biases").at("b_out").get<std::vector<double>>();
    auto vocab =
        seq_model::Vocabulary::from_codes(j.at("vocab").at("codes").get<std::vector<std::string>>());
    return {std::move(q), std::move(vocab)};
}

inline void save_quantized(const std::string& path, const QuantizedModel& q,
                           const seq_model::Vocabulary& vocab) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write quantized checkpoint: " + path);
    out << quantized_to_json(q, vocab).dump() << "\n";
}

inline std::pair<QuantizedModel, seq_model::Vocabulary> load_quantized(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open quantized checkpoint: " + path);
    nlohmann::json j;
    in >> j;
    return quantized_from_json(j);
}

}  // namespace supertracy::compress
