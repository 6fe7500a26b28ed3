#include "rscl/model.hpp"

#include "rscl/env.hpp"

namespace rscl {

EncoderDims encoder_dims_from(const TrainConfig& cfg) {
  EncoderDims d;
  d.v_views = cfg.v;
  d.n_tok = cfg.n_tok;
  d.d_model = cfg.d_model;
  d.d_hidden = cfg.d_hidden;
  d.d_proj = cfg.d_proj;
  d.raw_dim = env::kRawViewDim;
  d.n_instructions = env::kNumInstructions;
  return d;
}

DecoderDims decoder_dims_from(const TrainConfig& cfg) {
  DecoderDims d;
  d.d_model = cfg.d_model;
  d.d_q = env::kProprioDim;
  d.horizon = cfg.horizon;
  d.d_a = env::kActionDim;
  d.hidden = cfg.d_dec_hidden;
  return d;
}

Model Model::init(const TrainConfig& cfg, Rng& rng) {
  Model m;
  m.enc = encoder_dims_from(cfg);
  m.dec = decoder_dims_from(cfg);
  // Fixed init order keeps a given seed byte-reproducible.
  m.backbone = BackboneParams::init(m.enc, rng, cfg.freeze_backbone);
  m.adapter = AdapterParams::init(m.enc, rng);
  m.projector = ProjectorParams::init(m.enc, rng);
  m.decoder = DecoderParams::init(m.dec, rng);
  return m;
}

std::vector<std::pair<std::string, Var>> Model::named_params() const {
  std::vector<std::pair<std::string, Var>> out;
  for (std::size_t i = 0; i < backbone.view_w.size(); ++i) {
    out.emplace_back("backbone.view" + std::to_string(i) + ".W", backbone.view_w[i]);
    out.emplace_back("backbone.view" + std::to_string(i) + ".b", backbone.view_b[i]);
  }
  out.emplace_back("backbone.instr.E", backbone.instr_table);
  out.emplace_back("adapter.l0.W", adapter.w1);
  out.emplace_back("adapter.l0.b", adapter.b1);
  out.emplace_back("adapter.l1.W", adapter.w2);
  out.emplace_back("adapter.l1.b", adapter.b2);
  out.emplace_back("adapter.u", adapter.u);
  out.emplace_back("adapter.read", adapter.read);
  out.emplace_back("projector.l0.W", projector.w1);
  out.emplace_back("projector.l0.b", projector.b1);
  out.emplace_back("projector.l1.W", projector.w2);
  out.emplace_back("projector.l1.b", projector.b2);
  out.emplace_back("decoder.l0.W", decoder.w1);
  out.emplace_back("decoder.l0.b", decoder.b1);
  out.emplace_back("decoder.l1.W", decoder.w2);
  out.emplace_back("decoder.l1.b", decoder.b2);
  out.emplace_back("decoder.l2.W", decoder.w3);
  out.emplace_back("decoder.l2.b", decoder.b3);
  return out;
}

std::vector<Model::Group> Model::trainable_groups() const {
  std::vector<Group> groups;
  if (!backbone.frozen) {
    Group g;
    g.name = "backbone";
    g.params = backbone.params();
    groups.push_back(std::move(g));
  }
  groups.push_back({"adapter", adapter.params()});
  groups.push_back({"projector", projector.params()});
  groups.push_back({"decoder", decoder.params()});
  return groups;
}

std::vector<Var> Model::all_trainable() const {
  std::vector<Var> out;
  for (const auto& g : trainable_groups())
    for (const auto& p : g.params) out.push_back(p);
  return out;
}

}  // namespace rscl
