#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "remi/tokens.hpp"

namespace remi::model {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Segment-recurrent self-attention language model configuration. The
/// desk-scale reference is N=3 layers, M=4 heads, d=128, ffn=512, T=L=64.
struct ModelConfig {
    int n_layers = 3;
    int n_heads = 4;
    int d_model = 128;
    int ffn_dim = 512;
    int vocab_size = 0;
    int segment_len = 64; // T
    int memory_len = 64;  // L
    bool tied_output = false;
    std::uint64_t seed = 1;

    int head_dim() const { return d_model / n_heads; }
    void check() const; // throws std::invalid_argument on inconsistency
};

struct LayerTensors {
    Matrix w_q, w_k, w_v, w_o; // d x d, applied as y = x * W^T
    Matrix w_r;                // d x d, relative-position projection
    Vector u, v;               // d, global content / position attention biases
    Vector ln1_gain, ln1_bias, ln2_gain, ln2_bias; // d
    Matrix w1;                 // ffn x d
    Vector b1;                 // ffn
    Matrix w2;                 // d x ffn
    Vector b2;                 // d
};

struct ParamTensors {
    Matrix embedding; // V x d
    Matrix out_proj;  // V x d (unused when tied_output)
    Vector out_bias;  // V
    std::vector<LayerTensors> layers;
};

struct ModelParams {
    ModelConfig config;
    ParamTensors tensors;
};

/// Flat view over every learnable tensor, in a stable named order. Used by
/// the optimizer, the checkpoint format and the gradient checker.
struct TensorRef {
    std::string name;
    double* data;
    Eigen::Index rows, cols;

    Eigen::Index size() const { return rows * cols; }
};
std::vector<TensorRef> tensor_refs(ParamTensors& tensors, const ModelConfig& config);

ModelParams init_params(const ModelConfig& config); // deterministic in config.seed
ParamTensors zeros_like(const ModelConfig& config);

/// Per layer, the cached layer-input hidden states of up to L previous
/// positions. These are constants with respect to the current step's
/// gradients.
struct Memory {
    std::vector<Matrix> hidden; // n_layers entries, rows <= L, cols = d

    bool empty() const { return hidden.empty(); }
};

struct ForwardResult {
    Matrix logits; // segment length x V
    Memory new_memory;
};

/// Intermediate activations kept for the backward pass.
struct LayerCache {
    Matrix h_in, h_tilde;
    Matrix q, k, v;              // T x d, K x d, K x d
    std::vector<Matrix> probs;   // per head, T x K attention weights
    Matrix attn_concat;          // T x d, heads concatenated
    Matrix attn_out;             // T x d, after output projection
    Matrix ln1_in, ln1_out;      // T x d
    Vector ln1_mean, ln1_inv_std;
    Matrix ffn_pre;              // T x ffn, pre-activation
    Matrix ffn_act;              // T x ffn, after max(0, .)
    Matrix ln2_in, ln2_out;
    Vector ln2_mean, ln2_inv_std;
    Matrix r_proj;               // K x d, projected relative encodings
};
struct ForwardCache {
    std::vector<LayerCache> layers;
    std::vector<int> segment;
    Eigen::Index mem_len = 0;
};

/// One segment through the network: per layer, memory and current hiddens
/// are concatenated for keys/values, queries come from the current segment
/// only, attention is causal with relative positional encodings and the two
/// learned position biases, scores scaled by 1/sqrt(d/M); then residual +
/// layer norm, position-wise feed-forward with max(0, .), and a second
/// residual + norm. new_memory holds the current layer inputs truncated to L.
ForwardResult forward(const ModelParams& params, std::span<const int> segment,
                      const Memory& memory, ForwardCache* cache = nullptr);

struct LossGrads {
    double loss = 0.0; // mean cross-entropy, nats per token
    ParamTensors grads;
    Memory new_memory;
    std::vector<double> per_position_loss;
};

/// Mean next-token cross-entropy and its gradients through the full graph,
/// with the memory treated as constant. Throws std::runtime_error on a
/// non-finite loss.
LossGrads loss_and_grads(const ModelParams& params, std::span<const int> inputs,
                         std::span<const int> targets, const Memory& memory);

struct TrainOptions {
    int max_steps = 3000;
    double learning_rate = 2e-4;
    int warmup_steps = 200;
    double target_loss = 0.0; // stop once the epoch mean falls below (0 = run all steps)
    bool verbose = false;
};

struct TrainResult {
    ModelParams params;
    std::vector<double> step_loss;
    // One entry per epoch: mean loss per token kind (the per-event-type
    // training diagnostic).
    std::vector<std::map<std::string, double>> per_type_loss;
    int steps_run = 0;
};

/// Teacher-forced training over a corpus sharing one representation tag.
/// Sequences are split into consecutive segments of length T (the final
/// partial segment is kept, truncated at the piece end); memory is carried
/// across segments of a piece and reset between pieces. Adam with linear
/// warmup; deterministic given config.seed.
TrainResult train(const std::vector<tok::TokenSequence>& corpus, ModelConfig config,
                  const TrainOptions& options);

struct SampleOptions {
    double temperature = 1.0;
    int top_k = 16;
    int max_tokens = 512;
    std::vector<int> masked_indices; // set to -inf before the softmax
    std::uint64_t seed = 0;
};

/// Autoregressive sampling: logits / temperature, forbidden indices at -inf,
/// restricted to the top_k remaining, renormalized, drawn with the seeded
/// generator. temperature < 1e-6 degenerates to greedy argmax. Returns
/// prompt + continuation. Throws std::invalid_argument if the mask covers
/// the whole vocabulary or the prompt is empty.
tok::TokenSequence sample(const ModelParams& params, const tok::TokenSequence& prompt,
                          const SampleOptions& options);

struct Checkpoint {
    ModelParams params;
    tok::Repr repr = tok::Repr::remi;
};

/// Versioned binary container: config, representation tag, seed and all
/// parameter tensors with named shapes. Loading validates every shape.
void save_checkpoint(std::ostream& out, const ModelParams& params, tok::Repr repr);
Checkpoint load_checkpoint(std::istream& in); // throws std::runtime_error

} // namespace remi::model
