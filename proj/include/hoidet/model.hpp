#pragma once

// Set-prediction transformer for human-object interaction detection. A small
// convolutional stem turns the rendered scene into a token sequence, a
// self-attention encoder contextualizes it, and two parallel decoders read
// out H_q prediction slots each: one decoder for localization (boxes and
// classes), one for the interaction verb. Slots are paired by index.
//
// Every forward pass runs on a caller-supplied GradTape. Parameters live in
// persistent storage owned by the model and are bound onto a tape once per
// step with bind(); rebinding on a fresh tape is how training steps and
// inference calls stay independent.

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "hoidet/checkpoint.hpp"
#include "hoidet/geometry.hpp"
#include "hoidet/tensor.hpp"
#include "json.hpp"

namespace hoidet::model {

struct ModelConfig {
  int image_size = 64;        // square input raster edge, divisible by 4
  int d_model = 64;           // token width, divisible by n_heads
  int n_heads = 4;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int n_queries = 16;         // prediction slots; must cover max triplets per scene
  int n_object_classes = 6;   // the object head adds one background slot
  int n_verbs = 8;            // the verb head adds one background slot
  int stem_channels = 16;     // width after the first stem convolution
  double dropout_rate = 0.5;  // verb-head dropout driving the stochastic pass
  int verb_head_depth = 1;    // hidden layers in the verb head, 1 or 2
  bool aux_verb_head = false; // deterministic second verb head replaces the dropout branch

  void validate() const;  // throws InvalidConfig
  nlohmann::ordered_json to_json() const;
  static ModelConfig from_json(const nlohmann::ordered_json& j);
};

// One decoded prediction slot in plain numbers, as consumed by matching and
// evaluation. Probability vectors include the trailing background slot.
struct HoiPrediction {
  Box human_box, object_box;
  std::vector<double> human_probs;   // {person, background}
  std::vector<double> object_probs;  // n_object_classes + 1
  std::vector<double> verb_probs;    // n_verbs + 1
  GaussianBox box_gauss_h, box_gauss_o;
  double inter_var = 0.0;  // filled by the stochastic probe, not by forward()
};

// Tensors from one forward pass; loss assembly consumes these directly.
struct ForwardResult {
  Tensor human_logits;     // [n_queries, 2]
  Tensor object_logits;    // [n_queries, n_object_classes+1]
  Tensor verb_logits;      // [n_queries, n_verbs+1], deterministic pass
  Tensor verb_logits_sto;  // stochastic branch: dropout pass, aux head, or
                           // the deterministic logits again when neither ran
  bool aux_branch = false; // verb_logits_sto came from the aux head
  Tensor ref_h, off_h, var_h;  // [n,2] sigmoid centers, [n,4] softplus extents/variances
  Tensor ref_o, off_o, var_o;
  Tensor loc_emb, inter_emb;  // [n_queries, d_model] decoder outputs
};

// Post-softmax attention maps captured during a forward pass, for tests.
struct ForwardTrace {
  std::vector<Tensor> attentions;
};

class HoiModel {
 public:
  struct Param {
    std::string name;
    Shape shape;
    std::shared_ptr<std::vector<double>> values;
  };

  HoiModel(ModelConfig cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  const std::vector<Param>& params() const { return params_; }
  std::int64_t param_count() const;

  // Bind every parameter as a leaf on the tape, in params() order. All
  // forwards within one step must share one binding so gradients accumulate.
  std::vector<Tensor> bind(GradTape& tape) const;

  // Full pipeline on one rendered scene. `image` is [3,S,S]; pass a watched
  // tensor to differentiate w.r.t. pixels. With `stochastic` the verb head
  // runs a second, dropout-perturbed pass (or the aux head when configured).
  ForwardResult forward(GradTape& tape, const std::vector<Tensor>& bound, const Tensor& image,
                        bool stochastic, ForwardTrace* trace = nullptr) const;

  // Pipeline stages, exposed for focused tests.
  Tensor stem(GradTape& tape, const std::vector<Tensor>& bound, const Tensor& image) const;
  Tensor encode(GradTape& tape, const std::vector<Tensor>& bound, const Tensor& tokens,
                ForwardTrace* trace = nullptr) const;
  Tensor decode(GradTape& tape, const std::vector<Tensor>& bound, const Tensor& memory,
                bool interaction, ForwardTrace* trace = nullptr) const;
  // The verb head alone; the uncertainty probe re-runs this with dropout on.
  Tensor verb_head(GradTape& tape, const std::vector<Tensor>& bound, const Tensor& inter_emb,
                   bool dropout_active) const;
  Tensor aux_head(GradTape& tape, const std::vector<Tensor>& bound,
                  const Tensor& inter_emb) const;

  int token_count() const { return tokens_; }

  // checkpointing
  std::vector<CheckpointEntry> entries() const;
  void save(const std::string& path) const;
  static HoiModel load(const std::string& path);
  // read weights out of a larger checkpoint (e.g. one with optimizer state)
  static HoiModel from_checkpoint(const Checkpoint& ckpt);

 private:
  enum class Init { Xavier, Zero, One };

  void add_param(const std::string& name, Shape shape, Init init);
  void register_all();
  void init_values(std::uint64_t seed);
  const Tensor& P(const std::vector<Tensor>& bound, const std::string& name) const;

  Tensor attention(GradTape& t, const std::vector<Tensor>& bound, const std::string& prefix,
                   const Tensor& q_in, const Tensor& kv_in, ForwardTrace* trace) const;
  Tensor norm(GradTape& t, const std::vector<Tensor>& bound, const std::string& prefix,
              const Tensor& x) const;
  Tensor ffn(GradTape& t, const std::vector<Tensor>& bound, const std::string& prefix,
             const Tensor& x) const;
  Tensor verb_stack(GradTape& t, const std::vector<Tensor>& bound, const std::string& prefix,
                    const Tensor& inter_emb, bool dropout_active) const;

  ModelConfig cfg_;
  int tokens_ = 0;   // (image_size/4)^2
  int ffn_dim_ = 0;  // 2 * d_model
  std::vector<Param> params_;
  std::unordered_map<std::string, int> index_;
  std::vector<std::pair<std::string, Init>> init_plan_;
};

// Decode a forward pass into plain predictions; sizes are inferred from the
// tensor shapes. inter_var is left at zero.
std::vector<HoiPrediction> decode_predictions(const ForwardResult& fwd);

}  // namespace hoidet::model
