#include "rscl/checkpoint.hpp"

#include <json.hpp>

#include "rscl/env.hpp"
#include "rscl/errors.hpp"
#include "rscl/util.hpp"

namespace rscl {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr const char* kFormatTag = "rscl-checkpoint-v1";

ordered_json tensor_json(const Tensor& t) {
  ordered_json j;
  j["shape"] = t.shape();
  j["data"] = base64_encode_doubles(t.vec());
  return j;
}

const ordered_json& require(const ordered_json& j, const char* key,
                            const std::string& path) {
  auto it = j.find(key);
  if (it == j.end())
    throw IoError("checkpoint " + path + ": missing key '" + key + "'");
  return *it;
}

Tensor tensor_from_json(const ordered_json& j, const std::string& name,
                        const std::string& path) {
  Shape shape = require(j, "shape", path).get<Shape>();
  std::vector<double> data =
      base64_decode_doubles(require(j, "data", path).get<std::string>());
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  if (shape.empty() || n != data.size())
    throw IoError("checkpoint " + path + ": tensor '" + name +
                  "' has shape " + shape_str(shape) + " but " +
                  std::to_string(data.size()) + " values");
  return Tensor(std::move(shape), std::move(data));
}

template <std::size_t N>
ordered_json arr_json(const std::array<double, N>& a) {
  return ordered_json(std::vector<double>(a.begin(), a.end()));
}

template <std::size_t N>
std::array<double, N> arr_from_json(const ordered_json& j, const char* key,
                                    const std::string& path) {
  auto v = require(j, key, path).get<std::vector<double>>();
  if (v.size() != N)
    throw IoError("checkpoint " + path + ": '" + key + "' must have " +
                  std::to_string(N) + " entries, got " + std::to_string(v.size()));
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = v[i];
  return out;
}

ordered_json rng_json(const Rng& r) {
  auto s = r.state();
  return ordered_json(std::vector<std::uint64_t>(s.begin(), s.end()));
}

Rng rng_from_json(const ordered_json& j, const char* key, const std::string& path) {
  auto v = require(j, key, path).get<std::vector<std::uint64_t>>();
  if (v.size() != 4)
    throw IoError("checkpoint " + path + ": rng stream '" + key +
                  "' must have 4 words");
  Rng r(0);
  r.set_state({v[0], v[1], v[2], v[3]});
  return r;
}

int require_int(const ordered_json& j, const char* key, const std::string& path) {
  return require(j, key, path).get<int>();
}

}  // namespace

void save_checkpoint(const CheckpointData& ck, const std::string& path) {
  ordered_json j;
  j["format"] = kFormatTag;
  j["step"] = ck.step;

  const EncoderDims& e = ck.model.enc;
  const DecoderDims& d = ck.model.dec;
  ordered_json dims;
  dims["v"] = e.v_views;
  dims["n_tok"] = e.n_tok;
  dims["d_model"] = e.d_model;
  dims["d_hidden"] = e.d_hidden;
  dims["d_proj"] = e.d_proj;
  dims["raw_dim"] = e.raw_dim;
  dims["n_instructions"] = e.n_instructions;
  dims["d_dec_hidden"] = d.hidden;
  dims["horizon"] = d.horizon;
  dims["d_a"] = d.d_a;
  dims["d_q"] = d.d_q;
  j["dims"] = dims;

  ordered_json flags;
  flags["normalize_actions"] = ck.normalize_actions;
  flags["freeze_backbone"] = ck.freeze_backbone;
  j["flags"] = flags;

  ordered_json stats;
  stats["proprio_mean"] = arr_json(ck.stats.proprio_mean);
  stats["proprio_std"] = arr_json(ck.stats.proprio_std);
  stats["action_mean"] = arr_json(ck.stats.action_mean);
  stats["action_std"] = arr_json(ck.stats.action_std);
  stats["data_seed"] = ck.stats.data_seed;
  stats["n_trajectories"] = ck.stats.n_trajectories;
  stats["redraws"] = ck.stats.redraws;
  j["stats"] = stats;

  ordered_json params;
  for (const auto& [name, var] : ck.model.named_params())
    params[name] = tensor_json(var.value());
  j["params"] = params;

  auto groups = ck.model.trainable_groups();
  if (ck.opt.size() != groups.size())
    throw ValueError("checkpoint: " + std::to_string(ck.opt.size()) +
                     " optimizer states for " + std::to_string(groups.size()) +
                     " parameter groups");
  ordered_json optim = ordered_json::array();
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const AdamState& st = ck.opt[g];
    ordered_json go;
    go["group"] = groups[g].name;
    go["lr"] = st.lr;
    go["beta1"] = st.beta1;
    go["beta2"] = st.beta2;
    go["eps"] = st.eps;
    go["weight_decay"] = st.weight_decay;
    go["step"] = st.step;
    ordered_json ms = ordered_json::array();
    ordered_json vs = ordered_json::array();
    for (const Tensor& t : st.m) ms.push_back(tensor_json(t));
    for (const Tensor& t : st.v) vs.push_back(tensor_json(t));
    go["m"] = ms;
    go["v"] = vs;
    optim.push_back(go);
  }
  j["optim"] = optim;

  ordered_json rng;
  rng["batch"] = rng_json(ck.rngs.batch);
  rng["noise"] = rng_json(ck.rngs.noise);
  rng["aug"] = rng_json(ck.rngs.aug);
  j["rng"] = rng;

  atomic_write_file(path, j.dump(2) + "\n");
}

CheckpointData load_checkpoint(const std::string& path) {
  ordered_json j;
  try {
    j = ordered_json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint " + path + ": " + e.what());
  }
  if (require(j, "format", path).get<std::string>() != kFormatTag)
    throw IoError("checkpoint " + path + ": unsupported format tag");

  const ordered_json& dims = require(j, "dims", path);
  if (require_int(dims, "raw_dim", path) != env::kRawViewDim ||
      require_int(dims, "n_instructions", path) != env::kNumInstructions ||
      require_int(dims, "d_a", path) != env::kActionDim ||
      require_int(dims, "d_q", path) != env::kProprioDim)
    throw IoError("checkpoint " + path +
                  ": environment dimensions do not match this build");

  const ordered_json& flags = require(j, "flags", path);

  TrainConfig cfg;
  cfg.v = require_int(dims, "v", path);
  cfg.n_tok = require_int(dims, "n_tok", path);
  cfg.d_model = require_int(dims, "d_model", path);
  cfg.d_hidden = require_int(dims, "d_hidden", path);
  cfg.d_proj = require_int(dims, "d_proj", path);
  cfg.d_dec_hidden = require_int(dims, "d_dec_hidden", path);
  cfg.horizon = require_int(dims, "horizon", path);
  cfg.freeze_backbone = require(flags, "freeze_backbone", path).get<bool>();

  CheckpointData ck;
  ck.step = require(j, "step", path).get<long>();
  ck.normalize_actions = require(flags, "normalize_actions", path).get<bool>();
  ck.freeze_backbone = cfg.freeze_backbone;

  Rng scratch(0);
  ck.model = Model::init(cfg, scratch);

  const ordered_json& params = require(j, "params", path);
  auto named = ck.model.named_params();
  if (params.size() != named.size())
    throw IoError("checkpoint " + path + ": expected " +
                  std::to_string(named.size()) + " tensors, found " +
                  std::to_string(params.size()));
  for (auto& [name, var] : named) {
    auto it = params.find(name);
    if (it == params.end())
      throw IoError("checkpoint " + path + ": missing tensor '" + name + "'");
    Tensor t = tensor_from_json(*it, name, path);
    if (!t.same_shape(var.value()))
      throw IoError("checkpoint " + path + ": tensor '" + name + "' has shape " +
                    shape_str(t.shape()) + ", expected " +
                    shape_str(var.value().shape()));
    var.set_value(t);
  }

  const ordered_json& stats = require(j, "stats", path);
  ck.stats.proprio_mean = arr_from_json<env::kProprioDim>(stats, "proprio_mean", path);
  ck.stats.proprio_std = arr_from_json<env::kProprioDim>(stats, "proprio_std", path);
  ck.stats.action_mean = arr_from_json<env::kActionDim>(stats, "action_mean", path);
  ck.stats.action_std = arr_from_json<env::kActionDim>(stats, "action_std", path);
  ck.stats.data_seed = require(stats, "data_seed", path).get<std::uint64_t>();
  ck.stats.n_trajectories = require_int(stats, "n_trajectories", path);
  ck.stats.redraws = require_int(stats, "redraws", path);

  const ordered_json& optim = require(j, "optim", path);
  auto groups = ck.model.trainable_groups();
  if (!optim.is_array() || optim.size() != groups.size())
    throw IoError("checkpoint " + path + ": expected " +
                  std::to_string(groups.size()) + " optimizer groups");
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const ordered_json& go = optim[g];
    if (require(go, "group", path).get<std::string>() != groups[g].name)
      throw IoError("checkpoint " + path + ": optimizer group " +
                    std::to_string(g) + " is '" +
                    go["group"].get<std::string>() + "', expected '" +
                    groups[g].name + "'");
    AdamState st;
    st.lr = require(go, "lr", path).get<double>();
    st.beta1 = require(go, "beta1", path).get<double>();
    st.beta2 = require(go, "beta2", path).get<double>();
    st.eps = require(go, "eps", path).get<double>();
    st.weight_decay = require(go, "weight_decay", path).get<double>();
    st.step = require(go, "step", path).get<long>();
    const ordered_json& ms = require(go, "m", path);
    const ordered_json& vs = require(go, "v", path);
    if (ms.size() != groups[g].params.size() || vs.size() != groups[g].params.size())
      throw IoError("checkpoint " + path + ": optimizer group '" +
                    groups[g].name + "' moment count mismatch");
    for (std::size_t i = 0; i < groups[g].params.size(); ++i) {
      Tensor m = tensor_from_json(ms[i], groups[g].name + ".m", path);
      Tensor v = tensor_from_json(vs[i], groups[g].name + ".v", path);
      const Tensor& p = groups[g].params[i].value();
      if (!m.same_shape(p) || !v.same_shape(p))
        throw IoError("checkpoint " + path + ": optimizer group '" +
                      groups[g].name + "' moment shape mismatch");
      st.m.push_back(std::move(m));
      st.v.push_back(std::move(v));
    }
    ck.opt.push_back(std::move(st));
  }

  const ordered_json& rng = require(j, "rng", path);
  ck.rngs.batch = rng_from_json(rng, "batch", path);
  ck.rngs.noise = rng_from_json(rng, "noise", path);
  ck.rngs.aug = rng_from_json(rng, "aug", path);

  return ck;
}

}  // namespace rscl
