#include "hoidet/model.hpp"

#include <cmath>

#include "hoidet/errors.hpp"
#include "hoidet/rng.hpp"

namespace hoidet::model {

// ------------------------------------------------------------------ config

void ModelConfig::validate() const {
  if (image_size < 8 || image_size % 4 != 0)
    throw InvalidConfig("image_size must be >= 8 and divisible by 4");
  if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0)
    throw InvalidConfig("d_model must be a positive multiple of n_heads");
  if (encoder_layers < 1 || decoder_layers < 1)
    throw InvalidConfig("encoder_layers and decoder_layers must be >= 1");
  if (n_queries < 1) throw InvalidConfig("n_queries must be >= 1");
  if (n_object_classes < 1 || n_verbs < 1)
    throw InvalidConfig("class counts must be >= 1");
  if (stem_channels < 1) throw InvalidConfig("stem_channels must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw InvalidConfig("dropout_rate must lie in [0,1)");
  if (verb_head_depth != 1 && verb_head_depth != 2)
    throw InvalidConfig("verb_head_depth must be 1 or 2");
}

nlohmann::ordered_json ModelConfig::to_json() const {
  return nlohmann::ordered_json{{"image_size", image_size},
                                {"d_model", d_model},
                                {"n_heads", n_heads},
                                {"encoder_layers", encoder_layers},
                                {"decoder_layers", decoder_layers},
                                {"n_queries", n_queries},
                                {"n_object_classes", n_object_classes},
                                {"n_verbs", n_verbs},
                                {"stem_channels", stem_channels},
                                {"dropout_rate", dropout_rate},
                                {"verb_head_depth", verb_head_depth},
                                {"aux_verb_head", aux_verb_head}};
}

ModelConfig ModelConfig::from_json(const nlohmann::ordered_json& j) {
  ModelConfig c;
  c.image_size = j.at("image_size").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.encoder_layers = j.at("encoder_layers").get<int>();
  c.decoder_layers = j.at("decoder_layers").get<int>();
  c.n_queries = j.at("n_queries").get<int>();
  c.n_object_classes = j.at("n_object_classes").get<int>();
  c.n_verbs = j.at("n_verbs").get<int>();
  c.stem_channels = j.at("stem_channels").get<int>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.verb_head_depth = j.at("verb_head_depth").get<int>();
  c.aux_verb_head = j.at("aux_verb_head").get<bool>();
  c.validate();
  return c;
}

// -------------------------------------------------------------- parameters

HoiModel::HoiModel(ModelConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const int grid = cfg_.image_size / 4;
  tokens_ = grid * grid;
  ffn_dim_ = 2 * cfg_.d_model;
  register_all();
  init_values(init_seed);
}

void HoiModel::add_param(const std::string& name, Shape shape, Init init) {
  index_[name] = static_cast<int>(params_.size());
  auto storage = std::make_shared<std::vector<double>>(static_cast<size_t>(numel(shape)), 0.0);
  params_.push_back({name, std::move(shape), std::move(storage)});
  init_plan_.emplace_back(name, init);
}

void HoiModel::register_all() {
  const int d = cfg_.d_model, f = ffn_dim_, c = cfg_.stem_channels;

  add_param("stem.conv1.w", {27, c}, Init::Xavier);  // 3x3 taps over 3 channels
  add_param("stem.conv1.b", {c}, Init::Zero);
  add_param("stem.conv2.w", {9 * c, d}, Init::Xavier);
  add_param("stem.conv2.b", {d}, Init::Zero);
  add_param("pos", {tokens_, d}, Init::Xavier);

  auto add_attention = [&](const std::string& pre) {
    for (const char* m : {"wq", "wk", "wv", "wo"}) add_param(pre + "." + m, {d, d}, Init::Xavier);
    for (const char* m : {"bq", "bk", "bv", "bo"}) add_param(pre + "." + m, {d}, Init::Zero);
  };
  auto add_norm = [&](const std::string& pre) {
    add_param(pre + ".g", {d}, Init::One);
    add_param(pre + ".b", {d}, Init::Zero);
  };
  auto add_ffn = [&](const std::string& pre) {
    add_param(pre + ".w1", {d, f}, Init::Xavier);
    add_param(pre + ".b1", {f}, Init::Zero);
    add_param(pre + ".w2", {f, d}, Init::Xavier);
    add_param(pre + ".b2", {d}, Init::Zero);
  };

  for (int i = 0; i < cfg_.encoder_layers; ++i) {
    const std::string pre = "enc" + std::to_string(i);
    add_attention(pre + ".attn");
    add_norm(pre + ".ln1");
    add_ffn(pre + ".ffn");
    add_norm(pre + ".ln2");
  }

  add_param("query.loc", {cfg_.n_queries, d}, Init::Xavier);
  add_param("query.inter", {cfg_.n_queries, d}, Init::Xavier);
  for (const char* branch : {"dec_loc", "dec_inter"}) {
    for (int i = 0; i < cfg_.decoder_layers; ++i) {
      const std::string pre = std::string(branch) + std::to_string(i);
      add_attention(pre + ".self");
      add_norm(pre + ".ln1");
      add_attention(pre + ".cross");
      add_norm(pre + ".ln2");
      add_ffn(pre + ".ffn");
      add_norm(pre + ".ln3");
    }
  }

  add_param("head.human.w", {d, 2}, Init::Xavier);
  add_param("head.human.b", {2}, Init::Zero);
  add_param("head.object.w", {d, cfg_.n_object_classes + 1}, Init::Xavier);
  add_param("head.object.b", {cfg_.n_object_classes + 1}, Init::Zero);

  for (const char* role : {"head.box_h", "head.box_o"}) {
    const std::string pre(role);
    add_param(pre + ".mu.w1", {d, d}, Init::Xavier);
    add_param(pre + ".mu.b1", {d}, Init::Zero);
    add_param(pre + ".mu.w2", {d, 6}, Init::Xavier);  // 2 center + 4 extents
    add_param(pre + ".mu.b2", {6}, Init::Zero);
    add_param(pre + ".sig.w1", {d, d}, Init::Xavier);
    add_param(pre + ".sig.b1", {d}, Init::Zero);
    add_param(pre + ".sig.w2", {d, 4}, Init::Xavier);
    add_param(pre + ".sig.b2", {4}, Init::Zero);
  }

  auto add_verb_stack = [&](const std::string& pre) {
    for (int i = 0; i < cfg_.verb_head_depth; ++i) {
      add_param(pre + ".w" + std::to_string(i), {d, d}, Init::Xavier);
      add_param(pre + ".b" + std::to_string(i), {d}, Init::Zero);
    }
    add_param(pre + ".out_w", {d, cfg_.n_verbs + 1}, Init::Xavier);
    add_param(pre + ".out_b", {cfg_.n_verbs + 1}, Init::Zero);
  };
  add_verb_stack("head.verb");
  if (cfg_.aux_verb_head) add_verb_stack("head.aux");
}

void HoiModel::init_values(std::uint64_t seed) {
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    const Init kind = init_plan_[i].second;
    if (kind == Init::Zero) continue;  // storage is zero-filled already
    if (kind == Init::One) {
      std::fill(p.values->begin(), p.values->end(), 1.0);
      continue;
    }
    // fan counts from the matrix shape; each parameter gets its own stream
    // keyed by name, so the init is independent of registration order
    const int fan_in = p.shape[0];
    const int fan_out = p.shape.size() > 1 ? p.shape[1] : 1;
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    Rng rng(mix_seed(seed, hash_string(p.name)));
    for (double& v : *p.values) v = rng.uniform(-a, a);
  }
}

std::int64_t HoiModel::param_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += numel(p.shape);
  return n;
}

std::vector<Tensor> HoiModel::bind(GradTape& tape) const {
  std::vector<Tensor> bound;
  bound.reserve(params_.size());
  for (const auto& p : params_) bound.push_back(tape.leaf(p.shape, p.values));
  return bound;
}

const Tensor& HoiModel::P(const std::vector<Tensor>& bound, const std::string& name) const {
  return bound[static_cast<size_t>(index_.at(name))];
}

// ----------------------------------------------------------------- forward

Tensor HoiModel::attention(GradTape& t, const std::vector<Tensor>& bound,
                           const std::string& prefix, const Tensor& q_in, const Tensor& kv_in,
                           ForwardTrace* trace) const {
  const int dk = cfg_.d_model / cfg_.n_heads;
  const Tensor q = t.linear(q_in, P(bound, prefix + ".wq"), P(bound, prefix + ".bq"));
  const Tensor k = t.linear(kv_in, P(bound, prefix + ".wk"), P(bound, prefix + ".bk"));
  const Tensor v = t.linear(kv_in, P(bound, prefix + ".wv"), P(bound, prefix + ".bv"));
  std::vector<Tensor> heads;
  heads.reserve(static_cast<size_t>(cfg_.n_heads));
  for (int h = 0; h < cfg_.n_heads; ++h) {
    const Tensor qh = t.slice(q, 1, h * dk, dk);
    const Tensor kh = t.slice(k, 1, h * dk, dk);
    const Tensor vh = t.slice(v, 1, h * dk, dk);
    const Tensor scores = t.scale(t.matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dk)));
    const Tensor attn = t.softmax(scores, 1);
    if (trace) trace->attentions.push_back(attn);
    heads.push_back(t.matmul(attn, vh));
  }
  return t.linear(t.concat(heads, 1), P(bound, prefix + ".wo"), P(bound, prefix + ".bo"));
}

Tensor HoiModel::norm(GradTape& t, const std::vector<Tensor>& bound, const std::string& prefix,
                      const Tensor& x) const {
  return t.row_affine(t.layernorm(x), P(bound, prefix + ".g"), P(bound, prefix + ".b"));
}

Tensor HoiModel::ffn(GradTape& t, const std::vector<Tensor>& bound, const std::string& prefix,
                     const Tensor& x) const {
  const Tensor h = t.relu(t.linear(x, P(bound, prefix + ".w1"), P(bound, prefix + ".b1")));
  return t.linear(h, P(bound, prefix + ".w2"), P(bound, prefix + ".b2"));
}

Tensor HoiModel::stem(GradTape& t, const std::vector<Tensor>& bound, const Tensor& image) const {
  const int S = cfg_.image_size;
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != S || image.dim(2) != S)
    throw BadShape("stem expects a [3," + std::to_string(S) + "," + std::to_string(S) + "] image");
  const Tensor cols1 = t.im2col(image, 3, 2, 1);
  const Tensor h1 = t.relu(t.linear(cols1, P(bound, "stem.conv1.w"), P(bound, "stem.conv1.b")));
  const int half = S / 2;
  const Tensor grid = t.reshape(t.transpose(h1), {cfg_.stem_channels, half, half});
  const Tensor cols2 = t.im2col(grid, 3, 2, 1);
  return t.relu(t.linear(cols2, P(bound, "stem.conv2.w"), P(bound, "stem.conv2.b")));
}

Tensor HoiModel::encode(GradTape& t, const std::vector<Tensor>& bound, const Tensor& tokens,
                        ForwardTrace* trace) const {
  Tensor x = tokens;
  for (int i = 0; i < cfg_.encoder_layers; ++i) {
    const std::string pre = "enc" + std::to_string(i);
    x = norm(t, bound, pre + ".ln1", t.add(x, attention(t, bound, pre + ".attn", x, x, trace)));
    x = norm(t, bound, pre + ".ln2", t.add(x, ffn(t, bound, pre + ".ffn", x)));
  }
  return x;
}

Tensor HoiModel::decode(GradTape& t, const std::vector<Tensor>& bound, const Tensor& memory,
                        bool interaction, ForwardTrace* trace) const {
  Tensor x = P(bound, interaction ? "query.inter" : "query.loc");
  const std::string branch = interaction ? "dec_inter" : "dec_loc";
  for (int i = 0; i < cfg_.decoder_layers; ++i) {
    const std::string pre = branch + std::to_string(i);
    x = norm(t, bound, pre + ".ln1", t.add(x, attention(t, bound, pre + ".self", x, x, trace)));
    x = norm(t, bound, pre + ".ln2",
             t.add(x, attention(t, bound, pre + ".cross", x, memory, trace)));
    x = norm(t, bound, pre + ".ln3", t.add(x, ffn(t, bound, pre + ".ffn", x)));
  }
  return x;
}

Tensor HoiModel::verb_stack(GradTape& t, const std::vector<Tensor>& bound,
                            const std::string& prefix, const Tensor& inter_emb,
                            bool dropout_active) const {
  Tensor h = inter_emb;
  for (int i = 0; i < cfg_.verb_head_depth; ++i) {
    const std::string s = std::to_string(i);
    h = t.relu(t.linear(h, P(bound, prefix + ".w" + s), P(bound, prefix + ".b" + s)));
    h = t.dropout(h, cfg_.dropout_rate, dropout_active);
  }
  return t.linear(h, P(bound, prefix + ".out_w"), P(bound, prefix + ".out_b"));
}

Tensor HoiModel::verb_head(GradTape& t, const std::vector<Tensor>& bound, const Tensor& inter_emb,
                           bool dropout_active) const {
  return verb_stack(t, bound, "head.verb", inter_emb, dropout_active);
}

Tensor HoiModel::aux_head(GradTape& t, const std::vector<Tensor>& bound,
                          const Tensor& inter_emb) const {
  return verb_stack(t, bound, "head.aux", inter_emb, false);
}

ForwardResult HoiModel::forward(GradTape& t, const std::vector<Tensor>& bound,
                                const Tensor& image, bool stochastic,
                                ForwardTrace* trace) const {
  ForwardResult r;
  const Tensor tokens = t.add(stem(t, bound, image), P(bound, "pos"));
  const Tensor memory = encode(t, bound, tokens, trace);
  r.loc_emb = decode(t, bound, memory, false, trace);
  r.inter_emb = decode(t, bound, memory, true, trace);

  r.human_logits = t.linear(r.loc_emb, P(bound, "head.human.w"), P(bound, "head.human.b"));
  r.object_logits = t.linear(r.loc_emb, P(bound, "head.object.w"), P(bound, "head.object.b"));

  auto box_branch = [&](const std::string& pre, Tensor& ref, Tensor& off, Tensor& var) {
    const Tensor hm = t.relu(t.linear(r.loc_emb, P(bound, pre + ".mu.w1"), P(bound, pre + ".mu.b1")));
    const Tensor mu = t.linear(hm, P(bound, pre + ".mu.w2"), P(bound, pre + ".mu.b2"));
    ref = t.sigmoid(t.slice(mu, 1, 0, 2));   // reference point, inside the frame
    off = t.softplus(t.slice(mu, 1, 2, 4));  // nonnegative edge extents
    const Tensor hs = t.relu(t.linear(r.loc_emb, P(bound, pre + ".sig.w1"), P(bound, pre + ".sig.b1")));
    var = t.softplus(t.linear(hs, P(bound, pre + ".sig.w2"), P(bound, pre + ".sig.b2")));
  };
  box_branch("head.box_h", r.ref_h, r.off_h, r.var_h);
  box_branch("head.box_o", r.ref_o, r.off_o, r.var_o);

  r.verb_logits = verb_head(t, bound, r.inter_emb, false);
  if (cfg_.aux_verb_head) {
    r.verb_logits_sto = aux_head(t, bound, r.inter_emb);
    r.aux_branch = true;
  } else if (stochastic) {
    r.verb_logits_sto = verb_head(t, bound, r.inter_emb, true);
  } else {
    r.verb_logits_sto = r.verb_logits;
  }
  return r;
}

// ------------------------------------------------------------- predictions

namespace {
std::vector<double> row_softmax(const Tensor& logits, int row) {
  const int cols = logits.dim(1);
  std::vector<double> p(static_cast<size_t>(cols));
  double mx = logits.at(row, 0);
  for (int j = 1; j < cols; ++j) mx = std::max(mx, logits.at(row, j));
  double sum = 0.0;
  for (int j = 0; j < cols; ++j) {
    p[static_cast<size_t>(j)] = std::exp(logits.at(row, j) - mx);
    sum += p[static_cast<size_t>(j)];
  }
  for (double& v : p) v /= sum;
  return p;
}
}  // namespace

std::vector<HoiPrediction> decode_predictions(const ForwardResult& fwd) {
  const int n = fwd.human_logits.dim(0);
  std::vector<HoiPrediction> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    HoiPrediction& p = out[static_cast<size_t>(i)];
    p.human_probs = row_softmax(fwd.human_logits, i);
    p.object_probs = row_softmax(fwd.object_logits, i);
    p.verb_probs = row_softmax(fwd.verb_logits, i);

    const Point rh{fwd.ref_h.at(i, 0), fwd.ref_h.at(i, 1)};
    const BoxOffsets oh{fwd.off_h.at(i, 0), fwd.off_h.at(i, 1), fwd.off_h.at(i, 2),
                        fwd.off_h.at(i, 3)};
    p.human_box = offsets_to_box(rh, oh);
    p.box_gauss_h.mu = {oh.l, oh.r, oh.t, oh.b};
    p.box_gauss_h.var = {fwd.var_h.at(i, 0), fwd.var_h.at(i, 1), fwd.var_h.at(i, 2),
                         fwd.var_h.at(i, 3)};

    const Point ro{fwd.ref_o.at(i, 0), fwd.ref_o.at(i, 1)};
    const BoxOffsets oo{fwd.off_o.at(i, 0), fwd.off_o.at(i, 1), fwd.off_o.at(i, 2),
                        fwd.off_o.at(i, 3)};
    p.object_box = offsets_to_box(ro, oo);
    p.box_gauss_o.mu = {oo.l, oo.r, oo.t, oo.b};
    p.box_gauss_o.var = {fwd.var_o.at(i, 0), fwd.var_o.at(i, 1), fwd.var_o.at(i, 2),
                         fwd.var_o.at(i, 3)};
  }
  return out;
}

// ------------------------------------------------------------ checkpointing

std::vector<CheckpointEntry> HoiModel::entries() const {
  std::vector<CheckpointEntry> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back({p.name, p.shape, *p.values});
  return out;
}

void HoiModel::save(const std::string& path) const {
  save_checkpoint(path, nlohmann::ordered_json{{"model", cfg_.to_json()}}, entries());
}

HoiModel HoiModel::from_checkpoint(const Checkpoint& ckpt) {
  ModelConfig cfg = ModelConfig::from_json(ckpt.config.at("model"));
  HoiModel m(cfg, 0);
  for (auto& p : m.params_) {
    const CheckpointEntry& e = ckpt.at(p.name);
    if (e.shape != p.shape) throw IoError("checkpoint entry '" + p.name + "' has wrong shape");
    *p.values = e.data;
  }
  return m;
}

HoiModel HoiModel::load(const std::string& path) {
  return from_checkpoint(load_checkpoint(path));
}

}  // namespace hoidet::model
