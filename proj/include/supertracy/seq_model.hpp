#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "supertracy/errors.hpp"
#include "supertracy/event_model.hpp"
#include "supertracy/matrix.hpp"
#include "supertracy/rng.hpp"

namespace supertracy::seq_model {

using event_model::EventCode;
using event_model::EventTaxonomy;

// Code indices occupy [0, n_codes); BOS, EOS and PAD follow.
class Vocabulary {
public:
    static Vocabulary from_codes(std::vector<std::string> codes) {
        std::sort(codes.begin(), codes.end());
        Vocabulary v;
        for (const auto& raw : codes) {
            if (v.code_to_index_.count(raw)) continue;
            v.code_to_index_[raw] = static_cast<int>(v.index_to_code_.size());
            v.index_to_code_.push_back(raw);
        }
        return v;
    }

    static Vocabulary from_taxonomy(const EventTaxonomy& taxonomy) {
        std::vector<std::string> codes;
        for (const auto& [raw, def] : taxonomy.definitions()) codes.push_back(raw);
        return from_codes(std::move(codes));
    }

    int n_codes() const { return static_cast<int>(index_to_code_.size()); }
    int total() const { return n_codes() + 3; }
    int bos() const { return n_codes(); }
    int eos() const { return n_codes() + 1; }
    int pad() const { return n_codes() + 2; }

    int index_of(const EventCode& code) const {
        auto it = code_to_index_.find(code.raw);
        if (it == code_to_index_.end()) throw UnknownCode("code not in vocabulary: " + code.raw);
        return it->second;
    }

    bool contains(const std::string& raw) const { return code_to_index_.count(raw) > 0; }

    const std::string& code_at(int index) const {
        if (index < 0 || index >= n_codes()) throw IndexOutOfRange("no code at vocabulary index");
        return index_to_code_[static_cast<size_t>(index)];
    }

    const std::vector<std::string>& codes() const { return index_to_code_; }

private:
    std::vector<std::string> index_to_code_;
    std::map<std::string, int> code_to_index_;
};

struct Distribution {
    std::vector<double> probs;

    size_t size() const { return probs.size(); }
    double operator[](size_t i) const { return probs[i]; }

    // Lowest index wins ties, which keeps decoding deterministic.
    int argmax() const {
        int best = 0;
        for (size_t i = 1; i < probs.size(); ++i)
            if (probs[i] > probs[static_cast<size_t>(best)]) best = static_cast<int>(i);
        return best;
    }
};

// Single transformer block: multi-head self-attention and a position-wise
// feed-forward network, each followed by a residual addition. No layer
// normalization. Positional information comes from a learned position table
// added to the scaled token embeddings.
struct ModelParams {
    int d_model = 0;
    int n_heads = 0;
    int d_k = 0;
    int d_ff = 0;
    int max_positions = 0;

    Matrix E;                  // V_total x d_model
    Matrix P;                  // max_positions x d_model
    std::vector<Matrix> W_q;   // per head, d_model x d_k
    std::vector<Matrix> W_k;   // per head, d_model x d_k
    std::vector<Matrix> W_v;   // per head, d_model x d_k
    Matrix W_o;                // (n_heads*d_k) x d_model
    Matrix W_1;                // d_model x d_ff
    std::vector<double> b_1;   // d_ff
    Matrix W_2;                // d_ff x d_model
    std::vector<double> b_2;   // d_model
    Matrix W_out;              // d_model x V_total
    std::vector<double> b_out; // V_total

    int vocab_total() const { return static_cast<int>(E.rows()); }

    size_t parameter_count() const {
        size_t n = E.size() + P.size() + W_o.size() + W_1.size() + b_1.size() + W_2.size() +
                   b_2.size() + W_out.size() + b_out.size();
        for (const auto& m : W_q) n += m.size();
        for (const auto& m : W_k) n += m.size();
        for (const auto& m : W_v) n += m.size();
        return n;
    }
};

struct ModelDims {
    int d_model = 256;
    int n_heads = 4;
    int d_ff = 512;
    int max_positions = 64;
};

inline ModelParams init_params(const ModelDims& dims, int vocab_total, uint64_t seed) {
    if (dims.d_model % dims.n_heads != 0)
        throw ShapeMismatch("d_model must be divisible by n_heads");
    ModelParams p;
    p.d_model = dims.d_model;
    p.n_heads = dims.n_heads;
    p.d_k = dims.d_model / dims.n_heads;
    p.d_ff = dims.d_ff;
    p.max_positions = dims.max_positions;
    Rng rng(seed);
    auto u = [&](size_t r, size_t c) { return Matrix::uniform(r, c, rng, -0.1, 0.1); };
    p.E = u(vocab_total, p.d_model);
    p.P = u(p.max_positions, p.d_model);
    for (int h = 0; h < p.n_heads; ++h) {
        p.W_q.push_back(u(p.d_model, p.d_k));
        p.W_k.push_back(u(p.d_model, p.d_k));
        p.W_v.push_back(u(p.d_model, p.d_k));
    }
    p.W_o = u(static_cast<size_t>(p.n_heads) * p.d_k, p.d_model);
    p.W_1 = u(p.d_model, p.d_ff);
    p.b_1.assign(p.d_ff, 0.0);
    for (double& x : p.b_1) x = rng.uniform(-0.1, 0.1);
    p.W_2 = u(p.d_ff, p.d_model);
    p.b_2.assign(p.d_model, 0.0);
    for (double& x : p.b_2) x = rng.uniform(-0.1, 0.1);
    p.W_out = u(p.d_model, vocab_total);
    p.b_out.assign(vocab_total, 0.0);
    for (double& x : p.b_out) x = rng.uniform(-0.1, 0.1);
    return p;
}

// Scaled dot-product attention: softmax(Q K^T / sqrt(d_k)) V.
inline Matrix attention(const Matrix& Q, const Matrix& K, const Matrix& V) {
    if (Q.cols() != K.cols()) throw ShapeMismatch("attention: Q and K widths differ");
    if (K.rows() != V.rows()) throw ShapeMismatch("attention: K and V row counts differ");
    if (Q.cols() == 0) throw ShapeMismatch("attention: d_k must be at least 1");
    double scale = 1.0 / std::sqrt(static_cast<double>(Q.cols()));
    Matrix scores = Q.matmul_transposed(K);
    scores *= scale;
    for (size_t i = 0; i < scores.rows(); ++i) softmax_row(scores.row_ptr(i), scores.cols());
    return scores.matmul(V);
}

// Heads run independently on per-head projections of X; their outputs are
// concatenated and mixed by W_o.
inline Matrix multi_head(const Matrix& X, const ModelParams& params) {
    if (static_cast<int>(X.cols()) != params.d_model)
        throw ShapeMismatch("multi_head: input width is not d_model");
    size_t n = X.rows();
    Matrix concat(n, static_cast<size_t>(params.n_heads) * params.d_k);
    for (int h = 0; h < params.n_heads; ++h) {
        Matrix head = attention(X.matmul(params.W_q[h]), X.matmul(params.W_k[h]),
                                X.matmul(params.W_v[h]));
        for (size_t i = 0; i < n; ++i)
            for (int j = 0; j < params.d_k; ++j)
                concat.at(i, static_cast<size_t>(h) * params.d_k + j) = head.at(i, j);
    }
    return concat.matmul(params.W_o);
}

// Position-wise feed-forward: max(0, X W_1 + b_1) W_2 + b_2.
inline Matrix ffn(const Matrix& X, const ModelParams& params) {
    if (static_cast<int>(X.cols()) != params.d_model)
        throw ShapeMismatch("ffn: input width is not d_model");
    Matrix z = X.matmul(params.W_1);
    for (size_t i = 0; i < z.rows(); ++i)
        for (size_t j = 0; j < z.cols(); ++j) z.at(i, j) = std::max(0.0, z.at(i, j) + params.b_1[j]);
    Matrix out = z.matmul(params.W_2);
    for (size_t i = 0; i < out.rows(); ++i)
        for (size_t j = 0; j < out.cols(); ++j) out.at(i, j) += params.b_2[j];
    return out;
}

namespace detail {

// Token embeddings use the conventional sqrt(d_model) scale so gradients at
// the output head stay large enough for the short fine-tuning schedule.
inline double embed_scale(const ModelParams& p) {
    return std::sqrt(static_cast<double>(p.d_model));
}

// BOS plus the code tokens. Sequences longer than the position table keep
// their most recent context.
inline std::vector<int> token_ids(const std::vector<EventCode>& sequence, const Vocabulary& vocab,
                                  const ModelParams& params) {
    std::vector<int> ids;
    ids.push_back(vocab.bos());
    for (const auto& c : sequence) ids.push_back(vocab.index_of(c));
    size_t max_len = static_cast<size_t>(params.max_positions);
    if (ids.size() > max_len) {
        std::vector<int> tail(ids.end() - static_cast<long>(max_len) + 1, ids.end());
        ids.assign(1, vocab.bos());
        ids.insert(ids.end(), tail.begin(), tail.end());
    }
    return ids;
}

inline Matrix embed_tokens(const std::vector<int>& ids, const ModelParams& params) {
    Matrix X(ids.size(), params.d_model);
    double s = embed_scale(params);
    for (size_t i = 0; i < ids.size(); ++i)
        for (int j = 0; j < params.d_model; ++j)
            X.at(i, j) = s * params.E.at(static_cast<size_t>(ids[i]), j) + params.P.at(i, j);
    return X;
}

}  // namespace detail

// Full block on BOS + sequence, then softmax over the vocabulary from the
// final position's hidden state.
inline Distribution next_distribution(const std::vector<EventCode>& sequence,
                                      const ModelParams& params, const Vocabulary& vocab) {
    if (sequence.empty()) throw EmptySequence("next_distribution needs a non-empty sequence");
    std::vector<int> ids = detail::token_ids(sequence, vocab, params);
    Matrix X = detail::embed_tokens(ids, params);
    Matrix attn = multi_head(X, params);
    attn += X;  // residual
    Matrix f = ffn(attn, params);
    f += attn;  // residual
    size_t last = f.rows() - 1;
    std::vector<double> logits(params.vocab_total());
    for (int j = 0; j < params.vocab_total(); ++j) {
        double acc = params.b_out[j];
        for (int i = 0; i < params.d_model; ++i) acc += f.at(last, i) * params.W_out.at(i, j);
        logits[static_cast<size_t>(j)] = acc;
    }
    return Distribution{softmax(logits)};
}

inline double cross_entropy(const Distribution& pred, int target_index) {
    if (target_index < 0 || static_cast<size_t>(target_index) >= pred.size())
        throw IndexOutOfRange("cross_entropy target outside the vocabulary");
    return -std::log(pred[static_cast<size_t>(target_index)]);
}

struct PredictedSuffix {
    std::vector<EventCode> codes;
    bool is_prediction = true;
};

// Greedy decoding with lowest-index tie-break. Stops at a Deliver-category
// code, at EOS, or after max_len appended codes.
inline PredictedSuffix complete_sequence(const std::vector<EventCode>& sequence,
                                         const ModelParams& params, const Vocabulary& vocab,
                                         const EventTaxonomy& taxonomy, size_t max_len) {
    if (sequence.empty()) throw EmptySequence("complete_sequence needs a non-empty sequence");
    PredictedSuffix out;
    auto is_terminal = [&](const EventCode& c) {
        return taxonomy.contains(c) &&
               taxonomy.lookup(c).category == event_model::Category::Deliver;
    };
    if (is_terminal(sequence.back())) return out;
    std::vector<EventCode> current = sequence;
    for (size_t step = 0; step < max_len; ++step) {
        Distribution dist = next_distribution(current, params, vocab);
        int idx = dist.argmax();
        if (idx >= vocab.n_codes()) break;  // EOS or another special
        EventCode code = event_model::parse_event_code(vocab.code_at(idx));
        out.codes.push_back(code);
        current.push_back(code);
        if (is_terminal(code)) break;
    }
    return out;
}

struct TrainConfig {
    double lr = 2e-4;
    int batch_size = 2;
    int grad_accum_steps = 4;
    int total_steps = 120;
    int epochs = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.01;
    uint64_t seed = 42;
    ModelDims dims;
};

struct LossTrace {
    std::vector<double> losses;       // one entry per optimizer step
    std::vector<double> moving_avg;   // window of 10
    double final_val_loss = 0.0;

    void push(double loss) {
        losses.push_back(loss);
        size_t window = std::min<size_t>(losses.size(), 10);
        double sum = 0.0;
        for (size_t i = losses.size() - window; i < losses.size(); ++i) sum += losses[i];
        moving_avg.push_back(sum / static_cast<double>(window));
    }

    void save_csv(std::ostream& out) const {
        out << "step,loss,moving_avg\n";
        for (size_t i = 0; i < losses.size(); ++i) {
            char buf[96];
            std::snprintf(buf, sizeof(buf), "%zu,%.10f,%.10f\n", i + 1, losses[i], moving_avg[i]);
            out << buf;
        }
    }
};

namespace detail {

struct ParamTensor {
    std::string name;
    std::vector<double>* values;
    bool decay;  // weight decay applies to matrices only, never to biases
};

inline std::vector<ParamTensor> param_tensors(ModelParams& p) {
    std::vector<ParamTensor> out;
    out.push_back({"E", &p.E.data(), true});
    out.push_back({"P", &p.P.data(), true});
    for (int h = 0; h < p.n_heads; ++h) {
        out.push_back({"W_q" + std::to_string(h), &p.W_q[static_cast<size_t>(h)].data(), true});
        out.push_back({"W_k" + std::to_string(h), &p.W_k[static_cast<size_t>(h)].data(), true});
        out.push_back({"W_v" + std::to_string(h), &p.W_v[static_cast<size_t>(h)].data(), true});
    }
    out.push_back({"W_o", &p.W_o.data(), true});
    out.push_back({"W_1", &p.W_1.data(), true});
    out.push_back({"b_1", &p.b_1, false});
    out.push_back({"W_2", &p.W_2.data(), true});
    out.push_back({"b_2", &p.b_2, false});
    out.push_back({"W_out", &p.W_out.data(), true});
    out.push_back({"b_out", &p.b_out, false});
    return out;
}

// Gradient accumulator with the same shapes as the parameters.
struct Grads {
    explicit Grads(const ModelParams& p) {
        shadow = p;
        for (auto t : param_tensors(shadow)) std::fill(t.values->begin(), t.values->end(), 0.0);
    }

    void zero() {
        for (auto t : param_tensors(shadow)) std::fill(t.values->begin(), t.values->end(), 0.0);
    }

    ModelParams shadow;
};

// Forward plus backward over one sequence using the incremental form: the
// block output at the last position of a prefix depends only on that
// position's embedding and on the shared per-position K/V projections, so
// each prefix costs O(prefix) instead of O(prefix^2).
//
// targets[i] is the expected token after prefix tokens[0..i]; -1 skips the
// position. Gradients are summed into `grads` unscaled; the caller divides
// by the token count.
inline void forward_backward_sequence(const ModelParams& params, const std::vector<int>& tokens,
                                      const std::vector<int>& targets, Grads* grads,
                                      double& loss_sum, size_t& token_count) {
    const size_t T = tokens.size();
    const int d = params.d_model;
    const int dk = params.d_k;
    const int H = params.n_heads;
    const int dff = params.d_ff;
    const int V = params.vocab_total();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    const double es = embed_scale(params);

    // per-position embeddings and head projections
    std::vector<std::vector<double>> x(T, std::vector<double>(d));
    for (size_t i = 0; i < T; ++i)
        for (int j = 0; j < d; ++j)
            x[i][static_cast<size_t>(j)] =
                es * params.E.at(static_cast<size_t>(tokens[i]), j) + params.P.at(i, j);

    auto project = [&](const std::vector<Matrix>& W) {
        std::vector<std::vector<std::vector<double>>> out(
            static_cast<size_t>(H), std::vector<std::vector<double>>(T, std::vector<double>(dk, 0.0)));
        for (int h = 0; h < H; ++h) {
            const Matrix& w = W[static_cast<size_t>(h)];
            for (size_t i = 0; i < T; ++i)
                for (int a = 0; a < d; ++a) {
                    double xv = x[i][static_cast<size_t>(a)];
                    for (int b = 0; b < dk; ++b)
                        out[static_cast<size_t>(h)][i][static_cast<size_t>(b)] += xv * w.at(a, b);
                }
        }
        return out;
    };
    auto q = project(params.W_q);
    auto k = project(params.W_k);
    auto v = project(params.W_v);

    std::vector<std::vector<double>> dx(T, std::vector<double>(d, 0.0));
    std::vector<std::vector<std::vector<double>>> dq(
        static_cast<size_t>(H), std::vector<std::vector<double>>(T, std::vector<double>(dk, 0.0)));
    auto dkacc = dq;
    auto dvacc = dq;

    std::vector<double> dw_scratch(T), cvec(static_cast<size_t>(H) * dk), attn(d), u(d), z(dff),
        r(dff), f(d), hvec(d), logits(V), dlogits(V), dh(d), du(d), dr(dff), dz(dff), dattn(d),
        dcvec(static_cast<size_t>(H) * dk);

    for (size_t m = 1; m <= T; ++m) {
        int target = targets[m - 1];
        if (target < 0) continue;
        const size_t last = m - 1;

        // attention at the last position of the prefix
        std::fill(cvec.begin(), cvec.end(), 0.0);
        std::vector<std::vector<double>> head_weights(static_cast<size_t>(H));
        for (int h = 0; h < H; ++h) {
            auto& qh = q[static_cast<size_t>(h)];
            auto& kh = k[static_cast<size_t>(h)];
            auto& vh = v[static_cast<size_t>(h)];
            std::vector<double>& w = head_weights[static_cast<size_t>(h)];
            w.resize(m);
            for (size_t j = 0; j < m; ++j) {
                double acc = 0.0;
                for (int b = 0; b < dk; ++b)
                    acc += qh[last][static_cast<size_t>(b)] * kh[j][static_cast<size_t>(b)];
                w[j] = acc * scale;
            }
            softmax_row(w.data(), m);
            for (size_t j = 0; j < m; ++j)
                for (int b = 0; b < dk; ++b)
                    cvec[static_cast<size_t>(h) * dk + b] += w[j] * vh[j][static_cast<size_t>(b)];
        }
        for (int a = 0; a < d; ++a) {
            double acc = 0.0;
            for (size_t c = 0; c < cvec.size(); ++c) acc += cvec[c] * params.W_o.at(c, a);
            attn[static_cast<size_t>(a)] = acc;
        }
        for (int a = 0; a < d; ++a) u[static_cast<size_t>(a)] = x[last][static_cast<size_t>(a)] + attn[static_cast<size_t>(a)];
        for (int b = 0; b < dff; ++b) {
            double acc = params.b_1[static_cast<size_t>(b)];
            for (int a = 0; a < d; ++a) acc += u[static_cast<size_t>(a)] * params.W_1.at(a, b);
            z[static_cast<size_t>(b)] = acc;
            r[static_cast<size_t>(b)] = acc > 0.0 ? acc : 0.0;
        }
        for (int a = 0; a < d; ++a) {
            double acc = params.b_2[static_cast<size_t>(a)];
            for (int b = 0; b < dff; ++b) acc += r[static_cast<size_t>(b)] * params.W_2.at(b, a);
            f[static_cast<size_t>(a)] = acc;
            hvec[static_cast<size_t>(a)] = u[static_cast<size_t>(a)] + acc;
        }
        for (int j = 0; j < V; ++j) {
            double acc = params.b_out[static_cast<size_t>(j)];
            for (int a = 0; a < d; ++a) acc += hvec[static_cast<size_t>(a)] * params.W_out.at(a, j);
            logits[static_cast<size_t>(j)] = acc;
        }
        softmax_row(logits.data(), logits.size());
        loss_sum += -std::log(logits[static_cast<size_t>(target)]);
        token_count += 1;

        if (!grads) continue;
        ModelParams& g = grads->shadow;

        for (int j = 0; j < V; ++j) dlogits[static_cast<size_t>(j)] = logits[static_cast<size_t>(j)];
        dlogits[static_cast<size_t>(target)] -= 1.0;

        std::fill(dh.begin(), dh.end(), 0.0);
        for (int a = 0; a < d; ++a) {
            double ha = hvec[static_cast<size_t>(a)];
            double acc = 0.0;
            for (int j = 0; j < V; ++j) {
                g.W_out.at(a, j) += ha * dlogits[static_cast<size_t>(j)];
                acc += params.W_out.at(a, j) * dlogits[static_cast<size_t>(j)];
            }
            dh[static_cast<size_t>(a)] = acc;
        }
        for (int j = 0; j < V; ++j) g.b_out[static_cast<size_t>(j)] += dlogits[static_cast<size_t>(j)];

        // h = u + f; f = r W_2 + b_2; r = relu(z); z = u W_1 + b_1
        for (int a = 0; a < d; ++a) du[static_cast<size_t>(a)] = dh[static_cast<size_t>(a)];
        for (int b = 0; b < dff; ++b) {
            double rb = r[static_cast<size_t>(b)];
            double acc = 0.0;
            for (int a = 0; a < d; ++a) {
                g.W_2.at(b, a) += rb * dh[static_cast<size_t>(a)];
                acc += params.W_2.at(b, a) * dh[static_cast<size_t>(a)];
            }
            dr[static_cast<size_t>(b)] = acc;
            dz[static_cast<size_t>(b)] = z[static_cast<size_t>(b)] > 0.0 ? acc : 0.0;
        }
        for (int a = 0; a < d; ++a) g.b_2[static_cast<size_t>(a)] += dh[static_cast<size_t>(a)];
        for (int a = 0; a < d; ++a) {
            double ua = u[static_cast<size_t>(a)];
            double acc = 0.0;
            for (int b = 0; b < dff; ++b) {
                g.W_1.at(a, b) += ua * dz[static_cast<size_t>(b)];
                acc += params.W_1.at(a, b) * dz[static_cast<size_t>(b)];
            }
            du[static_cast<size_t>(a)] += acc;
        }
        for (int b = 0; b < dff; ++b) g.b_1[static_cast<size_t>(b)] += dz[static_cast<size_t>(b)];

        // u = x_last + attn; attn = cvec W_o
        for (int a = 0; a < d; ++a) {
            dx[last][static_cast<size_t>(a)] += du[static_cast<size_t>(a)];
            dattn[static_cast<size_t>(a)] = du[static_cast<size_t>(a)];
        }
        std::fill(dcvec.begin(), dcvec.end(), 0.0);
        for (size_t c = 0; c < cvec.size(); ++c) {
            double cv = cvec[c];
            double acc = 0.0;
            for (int a = 0; a < d; ++a) {
                g.W_o.at(c, a) += cv * dattn[static_cast<size_t>(a)];
                acc += params.W_o.at(c, a) * dattn[static_cast<size_t>(a)];
            }
            dcvec[c] = acc;
        }

        for (int h = 0; h < H; ++h) {
            auto& qh = q[static_cast<size_t>(h)];
            auto& kh = k[static_cast<size_t>(h)];
            auto& vh = v[static_cast<size_t>(h)];
            const std::vector<double>& w = head_weights[static_cast<size_t>(h)];
            const double* dhead = dcvec.data() + static_cast<size_t>(h) * dk;

            // dv and softmax backward; dw_scratch holds dL/dw_j per key
            double common = 0.0;
            dw_scratch.resize(m);
            for (size_t j = 0; j < m; ++j) {
                double dwj = 0.0;
                for (int b = 0; b < dk; ++b) {
                    dvacc[static_cast<size_t>(h)][j][static_cast<size_t>(b)] += w[j] * dhead[b];
                    dwj += dhead[b] * vh[j][static_cast<size_t>(b)];
                }
                dw_scratch[j] = dwj;
                common += w[j] * dwj;
            }
            for (size_t j = 0; j < m; ++j) {
                double ds = w[j] * (dw_scratch[j] - common) * scale;
                for (int b = 0; b < dk; ++b) {
                    dq[static_cast<size_t>(h)][last][static_cast<size_t>(b)] +=
                        ds * kh[j][static_cast<size_t>(b)];
                    dkacc[static_cast<size_t>(h)][j][static_cast<size_t>(b)] +=
                        ds * qh[last][static_cast<size_t>(b)];
                }
            }
        }
    }

    if (!grads) return;
    ModelParams& g = grads->shadow;

    // projections: q_i = x_i W_q etc.
    for (int h = 0; h < H; ++h) {
        const Matrix& wq = params.W_q[static_cast<size_t>(h)];
        const Matrix& wk = params.W_k[static_cast<size_t>(h)];
        const Matrix& wv = params.W_v[static_cast<size_t>(h)];
        Matrix& gq = g.W_q[static_cast<size_t>(h)];
        Matrix& gk = g.W_k[static_cast<size_t>(h)];
        Matrix& gv = g.W_v[static_cast<size_t>(h)];
        for (size_t i = 0; i < T; ++i) {
            for (int a = 0; a < d; ++a) {
                double xv = x[i][static_cast<size_t>(a)];
                double acc = 0.0;
                for (int b = 0; b < dk; ++b) {
                    double dqv = dq[static_cast<size_t>(h)][i][static_cast<size_t>(b)];
                    double dkv = dkacc[static_cast<size_t>(h)][i][static_cast<size_t>(b)];
                    double dvv = dvacc[static_cast<size_t>(h)][i][static_cast<size_t>(b)];
                    gq.at(a, b) += xv * dqv;
                    gk.at(a, b) += xv * dkv;
                    gv.at(a, b) += xv * dvv;
                    acc += wq.at(a, b) * dqv + wk.at(a, b) * dkv + wv.at(a, b) * dvv;
                }
                dx[i][static_cast<size_t>(a)] += acc;
            }
        }
    }

    // embeddings: x_i = es * E[token_i] + P[i]
    for (size_t i = 0; i < T; ++i) {
        for (int a = 0; a < d; ++a) {
            g.E.at(static_cast<size_t>(tokens[i]), a) += es * dx[i][static_cast<size_t>(a)];
            g.P.at(i, a) += dx[i][static_cast<size_t>(a)];
        }
    }
}

inline std::vector<int> sequence_tokens(const std::vector<EventCode>& codes,
                                        const Vocabulary& vocab, const ModelParams& params) {
    return token_ids(codes, vocab, params);
}

inline std::vector<int> sequence_targets(const std::vector<int>& tokens, const Vocabulary& vocab) {
    // tokens = BOS + codes (possibly left-truncated); target of position i is
    // the next token, EOS after the last code.
    std::vector<int> targets(tokens.size());
    for (size_t i = 0; i + 1 < tokens.size(); ++i) targets[i] = tokens[i + 1];
    targets[tokens.size() - 1] = vocab.eos();
    return targets;
}

struct AdamState {
    explicit AdamState(const ModelParams& p) : m(p), v(p) {}
    Grads m;
    Grads v;
};

}  // namespace detail

// Mean token loss of a set of sequences under the current parameters.
inline double evaluate_loss(const ModelParams& params, const Vocabulary& vocab,
                            const std::vector<std::vector<EventCode>>& sequences) {
    double loss_sum = 0.0;
    size_t count = 0;
    for (const auto& seq : sequences) {
        if (seq.empty()) continue;
        auto tokens = detail::sequence_tokens(seq, vocab, params);
        auto targets = detail::sequence_targets(tokens, vocab);
        detail::forward_backward_sequence(params, tokens, targets, nullptr, loss_sum, count);
    }
    return count ? loss_sum / static_cast<double>(count) : 0.0;
}

// AdamW with a linear learning-rate decay. Each optimizer step accumulates
// gradients over grad_accum_steps micro-batches of batch_size sequences.
inline std::pair<ModelParams, LossTrace> train(const std::vector<std::vector<EventCode>>& train_set,
                                               const std::vector<std::vector<EventCode>>& val_set,
                                               const TrainConfig& config, const Vocabulary& vocab) {
    if (train_set.empty()) throw EmptyTrainSet("train set is empty");
    if (config.batch_size < 1 || config.grad_accum_steps < 1 || config.total_steps < 1)
        throw InvalidConfig("train counts must be positive");

    ModelParams params = init_params(config.dims, vocab.total(), config.seed);
    detail::Grads grads(params);
    detail::AdamState adam(params);
    LossTrace trace;

    Rng order_rng = Rng(config.seed).fork("batch-order");
    std::vector<size_t> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    order_rng.shuffle(order);
    size_t cursor = 0;

    auto next_sequence = [&]() -> const std::vector<EventCode>& {
        if (cursor >= order.size()) {
            order_rng.shuffle(order);
            cursor = 0;
        }
        return train_set[order[cursor++]];
    };

    auto params_list = detail::param_tensors(params);
    auto grads_list = detail::param_tensors(grads.shadow);
    auto m_list = detail::param_tensors(adam.m.shadow);
    auto v_list = detail::param_tensors(adam.v.shadow);

    for (int step = 1; step <= config.total_steps; ++step) {
        grads.zero();
        double loss_sum = 0.0;
        size_t token_count = 0;
        for (int micro = 0; micro < config.grad_accum_steps; ++micro) {
            for (int b = 0; b < config.batch_size; ++b) {
                const auto& seq = next_sequence();
                if (seq.empty()) continue;
                auto tokens = detail::sequence_tokens(seq, vocab, params);
                auto targets = detail::sequence_targets(tokens, vocab);
                detail::forward_backward_sequence(params, tokens, targets, &grads, loss_sum,
                                                  token_count);
            }
        }
        double denom = token_count ? static_cast<double>(token_count) : 1.0;
        trace.push(loss_sum / denom);

        double lr_t = config.lr *
                      (1.0 - static_cast<double>(step - 1) / static_cast<double>(config.total_steps));
        double bc1 = 1.0 - std::pow(config.beta1, step);
        double bc2 = 1.0 - std::pow(config.beta2, step);
        for (size_t t = 0; t < params_list.size(); ++t) {
            auto& pv = *params_list[t].values;
            auto& gv = *grads_list[t].values;
            auto& mv = *m_list[t].values;
            auto& vv = *v_list[t].values;
            bool decay = params_list[t].decay;
            for (size_t i = 0; i < pv.size(); ++i) {
                double gradient = gv[i] / denom;
                mv[i] = config.beta1 * mv[i] + (1.0 - config.beta1) * gradient;
                vv[i] = config.beta2 * vv[i] + (1.0 - config.beta2) * gradient * gradient;
                double mhat = mv[i] / bc1;
                double vhat = vv[i] / bc2;
                double update = mhat / (std::sqrt(vhat) + config.adam_eps);
                if (decay) update += config.weight_decay * pv[i];
                pv[i] -= lr_t * update;
            }
        }
    }

    trace.final_val_loss = evaluate_loss(params, vocab, val_set);
    return {std::move(params), std::move(trace)};
}

// Versioned JSON checkpoint: dims, vocabulary, row-major weight arrays.
inline nlohmann::json checkpoint_to_json(const ModelParams& params, const Vocabulary& vocab) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["dims"] = {{"d_model", params.d_model},
                 {"n_heads", params.n_heads},
                 {"d_ff", params.d_ff},
                 {"max_positions", params.max_positions}};
    j["vocab"] = {{"codes", vocab.codes()}};
    nlohmann::json w;
    auto put = [&](const std::string& name, const Matrix& m) {
        w[name] = {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
    };
    put("E", params.E);
    put("P", params.P);
    for (int h = 0; h < params.n_heads; ++h) {
        put("W_q" + std::to_string(h), params.W_q[static_cast<size_t>(h)]);
        put("W_k" + std::to_string(h), params.W_k[static_cast<size_t>(h)]);
        put("W_v" + std::to_string(h), params.W_v[static_cast<size_t>(h)]);
    }
    put("W_o", params.W_o);
    put("W_1", params.W_1);
    put("W_2", params.W_2);
    put("W_out", params.W_out);
    w["b_1"] = params.b_1;
    w["b_2"] = params.b_2;
    w["b_out"] = params.b_out;
    j["weights"] = std::move(w);
    return j;
}

inline std::pair<ModelParams, Vocabulary> checkpoint_from_json(const nlohmann::json& j) {
    if (j.at("format_version").get<int>() != 1)
        throw SchemaMismatch("unsupported checkpoint format version");
    Vocabulary vocab = Vocabulary::from_codes(j.at("vocab").at("codes").get<std::vector<std::string>>());
    ModelParams p;
    p.d_model = j.at("dims").at("d_model").get<int>();
    p.n_heads = j.at("dims").at("n_heads").get<int>();
    p.d_k = p.d_model / p.n_heads;
    p.d_ff = j.at("dims").at("d_ff").get<int>();
    p.max_positions = j.at("dims").at("max_positions").get<int>();
    const auto& w = j.at("weights");
    auto get = [&](const std::string& name) {
        const auto& e = w.at(name);
        Matrix m(e.at("rows").get<size_t>(), e.at("cols").get<size_t>());
        m.data() = e.at("data").get<std::vector<double>>();
        return m;
    };
    p.E = get("E");
    p.P = get("P");
    for (int h = 0; h < p.n_heads; ++h) {
        p.W_q.push_back(get("W_q" + std::to_string(h)));
        p.W_k.push_back(get("W_k" + std::to_string(h)));
        p.W_v.push_back(get("W_v" + std::to_string(h)));
    }
    p.W_o = get("W_o");
    p.W_1 = get("W_1");
    p.W_2 = get("W_2");
    p.W_out = get("W_out");
    p.b_1 = w.at("b_1").get<std::vector<double>>();
    p.b_2 = w.at("b_2").get<std::vector<double>>();
    p.b_out = w.at("b_out").get<std::vector<double>>();
    return {std::move(p), std::move(vocab)};
}

inline void save_checkpoint(const std::string& path, const ModelParams& params,
                            const Vocabulary& vocab) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out << checkpoint_to_json(params, vocab).dump() << "\n";
}

inline std::pair<ModelParams, Vocabulary> load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    nlohmann::json j;
    in >> j;
    return checkpoint_from_json(j);
}

}  // namespace supertracy::seq_model
