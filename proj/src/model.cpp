#include "remi/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <stdexcept>

namespace remi::model {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInitStd = 0.02;

// Sinusoidal encodings of relative distances 0..len-1, one row per distance.
Matrix relative_encodings(Eigen::Index len, int d_model) {
    Matrix r(len, d_model);
    for (Eigen::Index dist = 0; dist < len; ++dist) {
        for (int i = 0; i < d_model; i += 2) {
            double freq = std::pow(10000.0, -double(i) / d_model);
            r(dist, i) = std::sin(double(dist) * freq);
            if (i + 1 < d_model) r(dist, i + 1) = std::cos(double(dist) * freq);
        }
    }
    return r;
}

struct LayerNormResult {
    Matrix out;
    Vector mean, inv_std;
};

LayerNormResult layer_norm(const Matrix& x, const Vector& gain, const Vector& bias) {
    LayerNormResult r;
    r.out.resize(x.rows(), x.cols());
    r.mean.resize(x.rows());
    r.inv_std.resize(x.rows());
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
        double mean = x.row(t).mean();
        double var = (x.row(t).array() - mean).square().mean();
        double inv_std = 1.0 / std::sqrt(var + kLnEps);
        r.mean(t) = mean;
        r.inv_std(t) = inv_std;
        r.out.row(t) =
            ((x.row(t).array() - mean) * inv_std * gain.transpose().array()).matrix() +
            bias.transpose();
    }
    return r;
}

// Gradient through y = ((x - mean) * inv_std) .* gain + bias, per row.
Matrix layer_norm_backward(const Matrix& dy, const Matrix& x, const Vector& mean,
                           const Vector& inv_std, const Vector& gain, Vector& dgain,
                           Vector& dbias) {
    Matrix dx(x.rows(), x.cols());
    const double n = double(x.cols());
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
        Eigen::ArrayXd xhat = (x.row(t).transpose().array() - mean(t)) * inv_std(t);
        Eigen::ArrayXd dyr = dy.row(t).transpose().array();
        dgain.array() += dyr * xhat;
        dbias.array() += dyr;
        Eigen::ArrayXd dxhat = dyr * gain.array();
        double m1 = dxhat.sum() / n;
        double m2 = (dxhat * xhat).sum() / n;
        dx.row(t) = (inv_std(t) * (dxhat - m1 - xhat * m2)).matrix().transpose();
    }
    return dx;
}

std::mt19937_64 seeded_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

double uniform01(std::mt19937_64& rng) {
    return double(rng() >> 11) * (1.0 / 9007199254740992.0); // 2^-53
}

void fill_normal(Matrix& m, std::mt19937_64& rng, double std_dev) {
    std::normal_distribution<double> dist(0.0, std_dev);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
}

void fill_normal(Vector& v, std::mt19937_64& rng, double std_dev) {
    std::normal_distribution<double> dist(0.0, std_dev);
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = dist(rng);
}

} // namespace

void ModelConfig::check() const {
    if (n_layers < 1) throw std::invalid_argument("n_layers must be >= 1");
    if (n_heads < 1) throw std::invalid_argument("n_heads must be >= 1");
    if (d_model < 1 || d_model % n_heads != 0)
        throw std::invalid_argument("d_model must be a positive multiple of n_heads");
    if (ffn_dim < 1) throw std::invalid_argument("ffn_dim must be >= 1");
    if (vocab_size < 2) throw std::invalid_argument("vocab_size must be >= 2");
    if (segment_len < 1) throw std::invalid_argument("segment_len must be >= 1");
    if (memory_len < 0) throw std::invalid_argument("memory_len must be >= 0");
}

std::vector<TensorRef> tensor_refs(ParamTensors& tensors, const ModelConfig& config) {
    std::vector<TensorRef> refs;
    auto add_m = [&](const std::string& name, Matrix& m) {
        refs.push_back({name, m.data(), m.rows(), m.cols()});
    };
    auto add_v = [&](const std::string& name, Vector& v) {
        refs.push_back({name, v.data(), v.size(), 1});
    };
    add_m("embedding", tensors.embedding);
    if (!config.tied_output) add_m("out_proj", tensors.out_proj);
    add_v("out_bias", tensors.out_bias);
    for (std::size_t l = 0; l < tensors.layers.size(); ++l) {
        LayerTensors& layer = tensors.layers[l];
        std::string p = "layer" + std::to_string(l) + ".";
        add_m(p + "w_q", layer.w_q);
        add_m(p + "w_k", layer.w_k);
        add_m(p + "w_v", layer.w_v);
        add_m(p + "w_o", layer.w_o);
        add_m(p + "w_r", layer.w_r);
        add_v(p + "u", layer.u);
        add_v(p + "v", layer.v);
        add_v(p + "ln1_gain", layer.ln1_gain);
        add_v(p + "ln1_bias", layer.ln1_bias);
        add_v(p + "ln2_gain", layer.ln2_gain);
        add_v(p + "ln2_bias", layer.ln2_bias);
        add_m(p + "w1", layer.w1);
        add_v(p + "b1", layer.b1);
        add_m(p + "w2", layer.w2);
        add_v(p + "b2", layer.b2);
    }
    return refs;
}

ParamTensors zeros_like(const ModelConfig& config) {
    ParamTensors t;
    const int d = config.d_model, V = config.vocab_size, f = config.ffn_dim;
    t.embedding = Matrix::Zero(V, d);
    t.out_proj = Matrix::Zero(V, d);
    t.out_bias = Vector::Zero(V);
    t.layers.resize(static_cast<std::size_t>(config.n_layers));
    for (auto& layer : t.layers) {
        layer.w_q = Matrix::Zero(d, d);
        layer.w_k = Matrix::Zero(d, d);
        layer.w_v = Matrix::Zero(d, d);
        layer.w_o = Matrix::Zero(d, d);
        layer.w_r = Matrix::Zero(d, d);
        layer.u = Vector::Zero(d);
        layer.v = Vector::Zero(d);
        layer.ln1_gain = Vector::Zero(d);
        layer.ln1_bias = Vector::Zero(d);
        layer.ln2_gain = Vector::Zero(d);
        layer.ln2_bias = Vector::Zero(d);
        layer.w1 = Matrix::Zero(f, d);
        layer.b1 = Vector::Zero(f);
        layer.w2 = Matrix::Zero(d, f);
        layer.b2 = Vector::Zero(d);
    }
    return t;
}

ModelParams init_params(const ModelConfig& config) {
    config.check();
    ModelParams params{config, zeros_like(config)};
    auto rng = seeded_rng(config.seed);
    fill_normal(params.tensors.embedding, rng, kInitStd);
    if (!config.tied_output) fill_normal(params.tensors.out_proj, rng, kInitStd);
    for (auto& layer : params.tensors.layers) {
        fill_normal(layer.w_q, rng, kInitStd);
        fill_normal(layer.w_k, rng, kInitStd);
        fill_normal(layer.w_v, rng, kInitStd);
        fill_normal(layer.w_o, rng, kInitStd);
        fill_normal(layer.w_r, rng, kInitStd);
        fill_normal(layer.u, rng, kInitStd);
        fill_normal(layer.v, rng, kInitStd);
        layer.ln1_gain.setOnes();
        layer.ln2_gain.setOnes();
        fill_normal(layer.w1, rng, kInitStd);
        fill_normal(layer.w2, rng, kInitStd);
    }
    return params;
}

ForwardResult forward(const ModelParams& params, std::span<const int> segment,
                      const Memory& memory, ForwardCache* cache) {
    const ModelConfig& cfg = params.config;
    cfg.check();
    const auto T = static_cast<Eigen::Index>(segment.size());
    if (T < 1) throw std::invalid_argument("empty segment");
    if (T > cfg.segment_len) throw std::invalid_argument("segment longer than segment_len");
    if (!memory.empty() && memory.hidden.size() != static_cast<std::size_t>(cfg.n_layers))
        throw std::invalid_argument("memory layer count does not match the model");
    const int d = cfg.d_model;
    const int dh = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(double(dh));

    Matrix h(T, d);
    for (Eigen::Index t = 0; t < T; ++t) {
        int id = segment[static_cast<std::size_t>(t)];
        if (id < 0 || id >= cfg.vocab_size) throw std::invalid_argument("token index out of range");
        h.row(t) = params.tensors.embedding.row(id);
    }

    if (cache) {
        cache->layers.assign(static_cast<std::size_t>(cfg.n_layers), {});
        cache->segment.assign(segment.begin(), segment.end());
    }

    ForwardResult result;
    result.new_memory.hidden.resize(static_cast<std::size_t>(cfg.n_layers));

    for (int layer_idx = 0; layer_idx < cfg.n_layers; ++layer_idx) {
        const LayerTensors& layer = params.tensors.layers[static_cast<std::size_t>(layer_idx)];
        const Matrix* mem =
            memory.empty() ? nullptr : &memory.hidden[static_cast<std::size_t>(layer_idx)];
        const Eigen::Index mem_len = mem ? mem->rows() : 0;
        const Eigen::Index K = mem_len + T;
        if (cache) cache->mem_len = mem_len;

        Matrix h_tilde(K, d);
        if (mem_len > 0) h_tilde.topRows(mem_len) = *mem;
        h_tilde.bottomRows(T) = h;

        // next segment's memory: the last L cached positions of this layer's input
        Eigen::Index keep = std::min<Eigen::Index>(K, cfg.memory_len);
        result.new_memory.hidden[static_cast<std::size_t>(layer_idx)] = h_tilde.bottomRows(keep);

        Matrix q = h * layer.w_q.transpose();       // T x d
        Matrix k = h_tilde * layer.w_k.transpose(); // K x d
        Matrix v = h_tilde * layer.w_v.transpose(); // K x d
        Matrix r_enc = relative_encodings(K, d);
        Matrix r_proj = r_enc * layer.w_r.transpose(); // K x d, row = distance

        Matrix attn_concat(T, d);
        std::vector<Matrix> probs;
        if (cache) probs.reserve(static_cast<std::size_t>(cfg.n_heads));
        for (int head = 0; head < cfg.n_heads; ++head) {
            const Eigen::Index c0 = static_cast<Eigen::Index>(head) * dh;
            auto q_h = q.middleCols(c0, dh);
            auto k_h = k.middleCols(c0, dh);
            auto v_h = v.middleCols(c0, dh);
            auto r_h = r_proj.middleCols(c0, dh);
            Vector u_h = layer.u.segment(c0, dh);
            Vector v_bias_h = layer.v.segment(c0, dh);

            Matrix ac = (q_h.rowwise() + u_h.transpose()) * k_h.transpose();      // T x K
            Matrix bd = (q_h.rowwise() + v_bias_h.transpose()) * r_h.transpose(); // T x K (by dist)

            Matrix p = Matrix::Zero(T, K);
            for (Eigen::Index t = 0; t < T; ++t) {
                const Eigen::Index last = mem_len + t; // causal horizon
                double max_score = -std::numeric_limits<double>::infinity();
                for (Eigen::Index j = 0; j <= last; ++j) {
                    double s = scale * (ac(t, j) + bd(t, last - j));
                    p(t, j) = s;
                    max_score = std::max(max_score, s);
                }
                double denom = 0.0;
                for (Eigen::Index j = 0; j <= last; ++j) {
                    p(t, j) = std::exp(p(t, j) - max_score);
                    denom += p(t, j);
                }
                for (Eigen::Index j = 0; j <= last; ++j) p(t, j) /= denom;
            }
            attn_concat.middleCols(c0, dh) = p * v_h;
            if (cache) probs.push_back(std::move(p));
        }

        Matrix attn_out = attn_concat * layer.w_o.transpose();
        Matrix ln1_in = attn_out + h;
        auto ln1 = layer_norm(ln1_in, layer.ln1_gain, layer.ln1_bias);

        Matrix ffn_pre = (ln1.out * layer.w1.transpose()).rowwise() + layer.b1.transpose();
        Matrix ffn_act = ffn_pre.cwiseMax(0.0);
        Matrix ffn_out = (ffn_act * layer.w2.transpose()).rowwise() + layer.b2.transpose();
        Matrix ln2_in = ln1.out + ffn_out;
        auto ln2 = layer_norm(ln2_in, layer.ln2_gain, layer.ln2_bias);

        if (cache) {
            LayerCache& lc = cache->layers[static_cast<std::size_t>(layer_idx)];
            lc.h_in = h;
            lc.h_tilde = std::move(h_tilde);
            lc.q = std::move(q);
            lc.k = std::move(k);
            lc.v = std::move(v);
            lc.probs = std::move(probs);
            lc.attn_concat = std::move(attn_concat);
            lc.attn_out = std::move(attn_out);
            lc.ln1_in = std::move(ln1_in);
            lc.ln1_out = ln1.out;
            lc.ln1_mean = std::move(ln1.mean);
            lc.ln1_inv_std = std::move(ln1.inv_std);
            lc.ffn_pre = std::move(ffn_pre);
            lc.ffn_act = std::move(ffn_act);
            lc.ln2_in = std::move(ln2_in);
            lc.ln2_out = ln2.out;
            lc.ln2_mean = std::move(ln2.mean);
            lc.ln2_inv_std = std::move(ln2.inv_std);
            lc.r_proj = std::move(r_proj);
        }
        h = std::move(ln2.out);
    }

    const Matrix& out_proj =
        cfg.tied_output ? params.tensors.embedding : params.tensors.out_proj;
    result.logits = (h * out_proj.transpose()).rowwise() + params.tensors.out_bias.transpose();
    return result;
}

LossGrads loss_and_grads(const ModelParams& params, std::span<const int> inputs,
                         std::span<const int> targets, const Memory& memory) {
    const ModelConfig& cfg = params.config;
    if (inputs.size() != targets.size())
        throw std::invalid_argument("inputs and targets must have equal length");

    ForwardCache cache;
    ForwardResult fwd = forward(params, inputs, memory, &cache);
    const auto T = static_cast<Eigen::Index>(inputs.size());
    const int d = cfg.d_model;
    const int dh = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(double(dh));

    LossGrads result;
    result.new_memory = std::move(fwd.new_memory);
    result.grads = zeros_like(cfg);
    result.per_position_loss.resize(static_cast<std::size_t>(T));

    // softmax cross-entropy and dlogits
    Matrix dlogits(T, cfg.vocab_size);
    double loss = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) {
        int target = targets[static_cast<std::size_t>(t)];
        if (target < 0 || target >= cfg.vocab_size)
            throw std::invalid_argument("target index out of range");
        double max_logit = fwd.logits.row(t).maxCoeff();
        Eigen::ArrayXd ex = (fwd.logits.row(t).transpose().array() - max_logit).exp();
        double denom = ex.sum();
        double log_prob = fwd.logits(t, target) - max_logit - std::log(denom);
        result.per_position_loss[static_cast<std::size_t>(t)] = -log_prob;
        loss -= log_prob;
        dlogits.row(t) = (ex / denom).matrix().transpose() / double(T);
        dlogits(t, target) -= 1.0 / double(T);
    }
    loss /= double(T);
    if (!std::isfinite(loss)) throw std::runtime_error("non-finite training loss");
    result.loss = loss;

    const Matrix& out_proj =
        cfg.tied_output ? params.tensors.embedding : params.tensors.out_proj;
    const Matrix& h_final = cache.layers.back().ln2_out;
    Matrix d_hidden = dlogits * out_proj; // T x d
    Matrix dout_proj = dlogits.transpose() * h_final;
    if (cfg.tied_output)
        result.grads.embedding += dout_proj;
    else
        result.grads.out_proj = std::move(dout_proj);
    result.grads.out_bias = dlogits.colwise().sum().transpose();

    for (int layer_idx = cfg.n_layers - 1; layer_idx >= 0; --layer_idx) {
        const LayerTensors& layer = params.tensors.layers[static_cast<std::size_t>(layer_idx)];
        LayerTensors& grads = result.grads.layers[static_cast<std::size_t>(layer_idx)];
        const LayerCache& lc = cache.layers[static_cast<std::size_t>(layer_idx)];
        const Eigen::Index mem_len = lc.h_tilde.rows() - T;
        const Eigen::Index K = lc.h_tilde.rows();

        // second residual + norm
        Matrix d_ln2_in = layer_norm_backward(d_hidden, lc.ln2_in, lc.ln2_mean, lc.ln2_inv_std,
                                              layer.ln2_gain, grads.ln2_gain, grads.ln2_bias);
        Matrix d_o = d_ln2_in; // residual branch

        // feed-forward
        grads.w2 += d_ln2_in.transpose() * lc.ffn_act;
        grads.b2 += d_ln2_in.colwise().sum().transpose();
        Matrix d_act = d_ln2_in * layer.w2;
        Matrix d_pre = (lc.ffn_pre.array() > 0.0).select(d_act, Matrix::Zero(T, cfg.ffn_dim));
        grads.w1 += d_pre.transpose() * lc.ln1_out;
        grads.b1 += d_pre.colwise().sum().transpose();
        d_o += d_pre * layer.w1;

        // first residual + norm
        Matrix d_ln1_in = layer_norm_backward(d_o, lc.ln1_in, lc.ln1_mean, lc.ln1_inv_std,
                                              layer.ln1_gain, grads.ln1_gain, grads.ln1_bias);
        Matrix d_h_in = d_ln1_in; // residual branch
        const Matrix& d_attn_out = d_ln1_in;

        // output projection of the attention block
        grads.w_o += d_attn_out.transpose() * lc.attn_concat;
        Matrix d_attn_concat = d_attn_out * layer.w_o;

        Matrix dq = Matrix::Zero(T, d);
        Matrix dk = Matrix::Zero(K, d);
        Matrix dv = Matrix::Zero(K, d);
        Matrix dr_proj = Matrix::Zero(K, d);

        for (int head = 0; head < cfg.n_heads; ++head) {
            const Eigen::Index c0 = static_cast<Eigen::Index>(head) * dh;
            auto q_h = lc.q.middleCols(c0, dh);
            auto k_h = lc.k.middleCols(c0, dh);
            auto v_h = lc.v.middleCols(c0, dh);
            auto r_h = lc.r_proj.middleCols(c0, dh);
            Vector u_h = layer.u.segment(c0, dh);
            Vector v_bias_h = layer.v.segment(c0, dh);
            const Matrix& p = lc.probs[static_cast<std::size_t>(head)];
            auto d_attn_h = d_attn_concat.middleCols(c0, dh);

            dv.middleCols(c0, dh) += p.transpose() * d_attn_h;
            Matrix dp = d_attn_h * v_h.transpose(); // T x K

            // softmax backward (masked entries have p = 0)
            Matrix ds(T, K);
            for (Eigen::Index t = 0; t < T; ++t) {
                double dot = p.row(t).dot(dp.row(t));
                ds.row(t) = (p.row(t).array() * (dp.row(t).array() - dot)).matrix() * scale;
            }

            // scores(t, j) = ac(t, j) + bd(t, mem_len + t - j)
            Matrix d_ac = ds;
            Matrix d_bd = Matrix::Zero(T, K);
            for (Eigen::Index t = 0; t < T; ++t) {
                const Eigen::Index last = mem_len + t;
                for (Eigen::Index j = 0; j <= last; ++j) d_bd(t, last - j) += ds(t, j);
            }

            Matrix q_u = q_h.rowwise() + u_h.transpose();
            Matrix q_v = q_h.rowwise() + v_bias_h.transpose();
            Matrix dq_from_ac = d_ac * k_h;
            Matrix dq_from_bd = d_bd * r_h;
            dq.middleCols(c0, dh) += dq_from_ac + dq_from_bd;
            grads.u.segment(c0, dh) += dq_from_ac.colwise().sum().transpose();
            grads.v.segment(c0, dh) += dq_from_bd.colwise().sum().transpose();
            dk.middleCols(c0, dh) += d_ac.transpose() * q_u;
            dr_proj.middleCols(c0, dh) += d_bd.transpose() * q_v;
        }

        grads.w_q += dq.transpose() * lc.h_in;
        grads.w_k += dk.transpose() * lc.h_tilde;
        grads.w_v += dv.transpose() * lc.h_tilde;
        grads.w_r += dr_proj.transpose() * relative_encodings(K, d);

        d_h_in += dq * layer.w_q;
        // gradients flowing into the memory rows of h_tilde are dropped:
        // the cached states are constants (stop_gradient)
        Matrix d_h_tilde = dk * layer.w_k + dv * layer.w_v;
        d_h_in += d_h_tilde.bottomRows(T);

        d_hidden = std::move(d_h_in);
    }

    for (Eigen::Index t = 0; t < T; ++t)
        result.grads.embedding.row(cache.segment[static_cast<std::size_t>(t)]) += d_hidden.row(t);

    return result;
}

namespace {

struct AdamState {
    ParamTensors m, v;
    int step = 0;
};

void adam_step(ParamTensors& params, const ParamTensors& grads, AdamState& state,
               const ModelConfig& cfg, double base_lr, int warmup_steps) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    ++state.step;
    double lr = base_lr;
    if (warmup_steps > 0 && state.step < warmup_steps)
        lr = base_lr * double(state.step) / double(warmup_steps);
    const double bc1 = 1.0 - std::pow(beta1, state.step);
    const double bc2 = 1.0 - std::pow(beta2, state.step);

    auto p_refs = tensor_refs(params, cfg);
    auto g_refs = tensor_refs(const_cast<ParamTensors&>(grads), cfg);
    auto m_refs = tensor_refs(state.m, cfg);
    auto v_refs = tensor_refs(state.v, cfg);
    for (std::size_t i = 0; i < p_refs.size(); ++i) {
        const Eigen::Index n = p_refs[i].size();
        double* p = p_refs[i].data;
        const double* g = g_refs[i].data;
        double* m = m_refs[i].data;
        double* v = v_refs[i].data;
        for (Eigen::Index j = 0; j < n; ++j) {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
            p[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps);
        }
    }
}

} // namespace

TrainResult train(const std::vector<tok::TokenSequence>& corpus, ModelConfig config,
                  const TrainOptions& options) {
    if (corpus.empty()) throw std::invalid_argument("empty corpus");
    const tok::Repr repr = corpus.front().repr;
    for (const auto& seq : corpus)
        if (seq.repr != repr)
            throw std::invalid_argument("corpus mixes representation tags");
    const auto& vocab = tok::vocabulary(repr);
    if (config.vocab_size == 0) config.vocab_size = vocab.size();
    if (config.vocab_size < vocab.size())
        throw std::invalid_argument("vocab_size smaller than the representation vocabulary");
    for (const auto& seq : corpus)
        if (seq.ids.size() < 2)
            throw std::invalid_argument("corpus sequences need at least two tokens");

    TrainResult result;
    result.params = init_params(config);
    AdamState adam{zeros_like(config), zeros_like(config), 0};

    const int T = config.segment_len;
    bool done = false;
    while (!done) {
        std::map<std::string, std::pair<double, std::int64_t>> type_acc; // sum, count
        double epoch_loss = 0.0;
        std::int64_t epoch_tokens = 0;
        for (const auto& piece : corpus) {
            Memory memory; // reset between pieces
            const auto len = piece.ids.size();
            for (std::size_t start = 0; start + 1 < len; start += static_cast<std::size_t>(T)) {
                std::size_t seg = std::min<std::size_t>(static_cast<std::size_t>(T), len - 1 - start);
                std::span<const int> inputs(piece.ids.data() + start, seg);
                std::span<const int> targets(piece.ids.data() + start + 1, seg);
                LossGrads lg = loss_and_grads(result.params, inputs, targets, memory);
                memory = std::move(lg.new_memory);
                adam_step(result.params.tensors, lg.grads, adam, config, options.learning_rate,
                          options.warmup_steps);
                result.step_loss.push_back(lg.loss);
                ++result.steps_run;
                epoch_loss += lg.loss * double(seg);
                epoch_tokens += static_cast<std::int64_t>(seg);
                for (std::size_t t = 0; t < seg; ++t) {
                    auto kind = tok::kind_name(vocab.kind_of_index(targets[t]));
                    auto& acc = type_acc[kind];
                    acc.first += lg.per_position_loss[t];
                    acc.second += 1;
                }
                if (result.steps_run >= options.max_steps) {
                    done = true;
                    break;
                }
            }
            if (done) break;
        }
        std::map<std::string, double> type_means;
        for (const auto& [kind, acc] : type_acc) type_means[kind] = acc.first / double(acc.second);
        result.per_type_loss.push_back(std::move(type_means));
        double mean_loss = epoch_tokens > 0 ? epoch_loss / double(epoch_tokens) : 0.0;
        if (options.verbose)
            std::fprintf(stderr, "epoch %zu  step %d  loss %.4f\n", result.per_type_loss.size(),
                         result.steps_run, mean_loss);
        if (options.target_loss > 0.0 && mean_loss < options.target_loss) done = true;
    }
    return result;
}

namespace {

int draw_token(const Eigen::VectorXd& logits_row, const SampleOptions& options,
               const std::set<int>& masked, std::mt19937_64& rng) {
    const int vocab_size = static_cast<int>(logits_row.size());
    std::vector<std::pair<double, int>> candidates;
    candidates.reserve(static_cast<std::size_t>(vocab_size));
    for (int i = 0; i < vocab_size; ++i)
        if (!masked.count(i)) candidates.push_back({logits_row(i), i});
    if (candidates.empty()) throw std::invalid_argument("mask covers the entire vocabulary");

    // (logit desc, index asc) makes ties deterministic
    auto by_rank = [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    };
    if (options.temperature < 1e-6) {
        return std::min_element(candidates.begin(), candidates.end(),
                                [&](const auto& a, const auto& b) { return by_rank(a, b); })
            ->second;
    }
    const int k = std::min<int>(std::max(options.top_k, 1), static_cast<int>(candidates.size()));
    std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end(), by_rank);
    candidates.resize(static_cast<std::size_t>(k));

    double max_logit = candidates.front().first;
    double denom = 0.0;
    std::vector<double> weights(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        weights[i] = std::exp((candidates[i].first - max_logit) / options.temperature);
        denom += weights[i];
    }
    double u = uniform01(rng) * denom;
    double cumulative = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        cumulative += weights[i];
        if (u < cumulative) return candidates[i].second;
    }
    return candidates.back().second;
}

} // namespace

tok::TokenSequence sample(const ModelParams& params, const tok::TokenSequence& prompt,
                          const SampleOptions& options) {
    if (prompt.ids.empty()) throw std::invalid_argument("prompt must not be empty");
    if (options.temperature < 0.0) throw std::invalid_argument("temperature must be positive");
    const auto& vocab = tok::vocabulary(prompt.repr);
    if (vocab.size() > params.config.vocab_size)
        throw std::invalid_argument("model vocabulary too small for this representation");
    std::set<int> masked(options.masked_indices.begin(), options.masked_indices.end());
    for (int id : masked)
        if (id < 0 || id >= params.config.vocab_size)
            throw std::invalid_argument("masked index out of range");
    if (static_cast<int>(masked.size()) >= params.config.vocab_size)
        throw std::invalid_argument("mask covers the entire vocabulary");

    auto rng = seeded_rng(options.seed);
    tok::TokenSequence out = prompt;

    Memory memory;
    Eigen::VectorXd last_logits;
    const int T = params.config.segment_len;
    for (std::size_t start = 0; start < prompt.ids.size(); start += static_cast<std::size_t>(T)) {
        std::size_t seg = std::min<std::size_t>(static_cast<std::size_t>(T),
                                                prompt.ids.size() - start);
        ForwardResult fwd =
            forward(params, std::span<const int>(prompt.ids.data() + start, seg), memory);
        memory = std::move(fwd.new_memory);
        last_logits = fwd.logits.row(static_cast<Eigen::Index>(seg) - 1).transpose();
    }

    for (int produced = 0; produced < options.max_tokens; ++produced) {
        int next = draw_token(last_logits, options, masked, rng);
        out.ids.push_back(next);
        ForwardResult fwd = forward(params, std::span<const int>(&next, 1), memory);
        memory = std::move(fwd.new_memory);
        last_logits = fwd.logits.row(0).transpose();
    }
    return out;
}

namespace {

void write_bytes(std::ostream& out, const void* data, std::size_t n) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

template <typename T> void write_pod(std::ostream& out, T value) {
    write_bytes(out, &value, sizeof(value));
}

template <typename T> T read_pod(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(value));
    if (!in) throw std::runtime_error("truncated checkpoint");
    return value;
}

constexpr char kCheckpointMagic[8] = {'R', 'E', 'M', 'I', 'C', 'K', 'P', '1'};

} // namespace

void save_checkpoint(std::ostream& out, const ModelParams& params, tok::Repr repr) {
    write_bytes(out, kCheckpointMagic, sizeof(kCheckpointMagic));
    const ModelConfig& cfg = params.config;
    write_pod<std::int32_t>(out, cfg.n_layers);
    write_pod<std::int32_t>(out, cfg.n_heads);
    write_pod<std::int32_t>(out, cfg.d_model);
    write_pod<std::int32_t>(out, cfg.ffn_dim);
    write_pod<std::int32_t>(out, cfg.vocab_size);
    write_pod<std::int32_t>(out, cfg.segment_len);
    write_pod<std::int32_t>(out, cfg.memory_len);
    write_pod<std::uint8_t>(out, cfg.tied_output ? 1 : 0);
    write_pod<std::uint64_t>(out, cfg.seed);
    std::string tag = tok::repr_name(repr);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(tag.size()));
    write_bytes(out, tag.data(), tag.size());

    auto refs = tensor_refs(const_cast<ParamTensors&>(params.tensors), cfg);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(refs.size()));
    for (const auto& ref : refs) {
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ref.name.size()));
        write_bytes(out, ref.name.data(), ref.name.size());
        write_pod<std::int64_t>(out, ref.rows);
        write_pod<std::int64_t>(out, ref.cols);
        write_bytes(out, ref.data, sizeof(double) * static_cast<std::size_t>(ref.size()));
    }
    if (!out) throw std::runtime_error("failed writing checkpoint");
}

Checkpoint load_checkpoint(std::istream& in) {
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw std::runtime_error("not a model checkpoint (bad magic)");

    ModelConfig cfg;
    cfg.n_layers = read_pod<std::int32_t>(in);
    cfg.n_heads = read_pod<std::int32_t>(in);
    cfg.d_model = read_pod<std::int32_t>(in);
    cfg.ffn_dim = read_pod<std::int32_t>(in);
    cfg.vocab_size = read_pod<std::int32_t>(in);
    cfg.segment_len = read_pod<std::int32_t>(in);
    cfg.memory_len = read_pod<std::int32_t>(in);
    cfg.tied_output = read_pod<std::uint8_t>(in) != 0;
    cfg.seed = read_pod<std::uint64_t>(in);
    cfg.check();

    auto tag_len = read_pod<std::uint32_t>(in);
    if (tag_len > 64) throw std::runtime_error("corrupt checkpoint (tag length)");
    std::string tag(tag_len, '\0');
    in.read(tag.data(), tag_len);
    if (!in) throw std::runtime_error("truncated checkpoint");

    Checkpoint ckpt;
    ckpt.repr = tok::parse_repr(tag);
    ckpt.params.config = cfg;
    ckpt.params.tensors = zeros_like(cfg);

    auto refs = tensor_refs(ckpt.params.tensors, cfg);
    auto n_tensors = read_pod<std::uint32_t>(in);
    if (n_tensors != refs.size()) throw std::runtime_error("checkpoint tensor count mismatch");
    for (auto& ref : refs) {
        auto name_len = read_pod<std::uint32_t>(in);
        if (name_len > 256) throw std::runtime_error("corrupt checkpoint (name length)");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        auto rows = read_pod<std::int64_t>(in);
        auto cols = read_pod<std::int64_t>(in);
        if (!in || name != ref.name || rows != ref.rows || cols != ref.cols)
            throw std::runtime_error("checkpoint tensor " + name + " does not match the config");
        in.read(reinterpret_cast<char*>(ref.data),
                static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(ref.size())));
        if (!in) throw std::runtime_error("truncated checkpoint");
    }
    return ckpt;
}

} // namespace remi::model
