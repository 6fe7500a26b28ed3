#include "rscl/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "rscl/errors.hpp"
#include "rscl/util.hpp"

namespace rscl {
namespace {

using ordered_json = nlohmann::ordered_json;

// Column-centered copy.
Tensor center(const Tensor& x) {
  require_rank2(x, "alignment input");
  Tensor out = x;
  const std::size_t n = x.rows(), d = x.cols();
  for (std::size_t c = 0; c < d; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += x.at(r, c);
    mean /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) out.at(r, c) -= mean;
  }
  return out;
}

// Gram matrix of centered rows: K = Xc * Xc^T.
Tensor gram(const Tensor& xc) {
  const std::size_t n = xc.rows(), d = xc.cols();
  Tensor k = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += xc.at(i, c) * xc.at(j, c);
      k.at(i, j) = s;
      k.at(j, i) = s;
    }
  return k;
}

// Per-row top-k neighbor mask by kernel value (self excluded, ties to the
// lower index). mask[i*n+j] == true iff j is a neighbor of i.
std::vector<char> knn_mask(const Tensor& k, int kk) {
  const std::size_t n = k.rows();
  std::vector<char> mask(n * n, 0);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < n; ++i) {
    idx.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) idx.push_back(j);
    std::partial_sort(idx.begin(), idx.begin() + kk, idx.end(),
                      [&](std::size_t a, std::size_t b) {
                        double va = k.at(i, a), vb = k.at(i, b);
                        if (va != vb) return va > vb;
                        return a < b;
                      });
    for (int t = 0; t < kk; ++t) mask[i * n + idx[static_cast<std::size_t>(t)]] = 1;
  }
  return mask;
}

void check_paired(const Tensor& x, const Tensor& y, const char* ctx) {
  require_rank2(x, ctx);
  require_rank2(y, ctx);
  if (x.rows() != y.rows())
    throw ShapeError(std::string(ctx) + ": row counts differ, " +
                     shape_str(x.shape()) + " vs " + shape_str(y.shape()));
}

}  // namespace

double linear_cka(const Tensor& x, const Tensor& y) {
  check_paired(x, y, "linear_cka");
  if (x.rows() < 2) throw ValueError("linear_cka: need at least 2 rows");
  Tensor xc = center(x), yc = center(y);
  const std::size_t n = x.rows(), dx = x.cols(), dy = y.cols();

  // HSIC with linear kernels reduces to Frobenius norms of cross-covariances.
  auto cross_fro2 = [n](const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t ca = 0; ca < a.cols(); ++ca)
      for (std::size_t cb = 0; cb < b.cols(); ++cb) {
        double dot = 0.0;
        for (std::size_t r = 0; r < n; ++r) dot += a.at(r, ca) * b.at(r, cb);
        s += dot * dot;
      }
    return s;
  };
  (void)dx;
  (void)dy;
  double num = cross_fro2(xc, yc);
  double den = std::sqrt(cross_fro2(xc, xc)) * std::sqrt(cross_fro2(yc, yc));
  if (den <= 0.0 || !std::isfinite(den))
    throw NumericError("linear_cka: degenerate (constant) input");
  return num / den;
}

double cknna(const Tensor& x, const Tensor& y, int k) {
  check_paired(x, y, "cknna");
  const std::size_t n = x.rows();
  if (k < 1) throw ValueError("cknna: k must be >= 1");
  if (n <= static_cast<std::size_t>(k))
    throw ValueError("cknna: need more rows than k, got n=" +
                     std::to_string(n) + ", k=" + std::to_string(k));

  Tensor kx = gram(center(x));
  Tensor ky = gram(center(y));
  std::vector<char> mx = knn_mask(kx, k);
  std::vector<char> my = knn_mask(ky, k);

  // HSIC over the masked pair sample: kernel entries are centered by their
  // masked means before the product sums. Without this, mutual neighbors'
  // systematically large kernel values make even independent inputs score
  // near 1 (selection bias).
  long double sum_a = 0.0, sum_b = 0.0;
  std::size_t m = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || !mx[i * n + j] || !my[i * n + j]) continue;
      sum_a += kx.at(i, j);
      sum_b += ky.at(i, j);
      ++m;
    }
  if (m == 0) throw ValueError("cknna: mutual nearest-neighbor mask is empty");
  const double mean_a = static_cast<double>(sum_a / m);
  const double mean_b = static_cast<double>(sum_b / m);

  double num = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || !mx[i * n + j] || !my[i * n + j]) continue;
      double a = kx.at(i, j) - mean_a, b = ky.at(i, j) - mean_b;
      num += a * b;
      sxx += a * a;
      syy += b * b;
    }
  double den = std::sqrt(sxx) * std::sqrt(syy);
  if (den <= 0.0 || !std::isfinite(den))
    throw NumericError("cknna: degenerate kernels under the neighbor mask");
  return num / den;
}

EmbeddingDump dump_embeddings(const CheckpointData& ck, const Dataset& ds,
                              int window, const std::string& checkpoint_label,
                              const std::string& dataset_label) {
  if (window < 1) throw ValueError("dump_embeddings: window must be >= 1");
  if (ds.trajectories.empty()) throw ValueError("dump_embeddings: empty dataset");

  NoGradGuard guard;
  const Model& model = ck.model;
  constexpr int kTrajPerTask = 10;
  std::vector<int> taken(static_cast<std::size_t>(model.enc.n_instructions), 0);

  std::vector<double> xs, qs;
  std::size_t n = 0;
  for (const Trajectory& traj : ds.trajectories) {
    if (traj.task_id < 0 || traj.task_id >= model.enc.n_instructions)
      throw ValueError("dump_embeddings: task id " + std::to_string(traj.task_id) +
                       " out of range");
    int& count = taken[static_cast<std::size_t>(traj.task_id)];
    if (count >= kTrajPerTask) continue;
    ++count;
    for (std::size_t t = 0; t < traj.steps.size();
         t += static_cast<std::size_t>(window)) {
      const TrajStep& step = traj.steps[t];
      TokenSequence seq = backbone_forward(model.backbone, model.enc, step.views,
                                           traj.task_id);
      auto [h, w] = adapter_forward(model.adapter, seq);
      Tensor pooled = mean_rows(h.tokens).value();  // [1, d_model]
      xs.insert(xs.end(), pooled.vec().begin(), pooled.vec().end());
      auto qn = normalize_proprio(ck.stats, step.proprio);
      qs.insert(qs.end(), qn.begin(), qn.end());
      ++n;
    }
  }
  if (n < 2) throw ValueError("dump_embeddings: fewer than 2 samples harvested");

  EmbeddingDump dump;
  dump.x = Tensor({n, static_cast<std::size_t>(model.enc.d_model)}, std::move(xs));
  dump.q = Tensor({n, static_cast<std::size_t>(env::kProprioDim)}, std::move(qs));
  dump.checkpoint = checkpoint_label;
  dump.dataset = dataset_label;
  dump.window = window;
  return dump;
}

void write_embedding_dump(const EmbeddingDump& dump, const std::string& path) {
  ordered_json j;
  j["format"] = "rscl-embedding-dump-v1";
  j["checkpoint"] = dump.checkpoint;
  j["dataset"] = dump.dataset;
  j["window"] = dump.window;
  ordered_json x;
  x["shape"] = dump.x.shape();
  x["data"] = base64_encode_doubles(dump.x.vec());
  j["x"] = x;
  ordered_json q;
  q["shape"] = dump.q.shape();
  q["data"] = base64_encode_doubles(dump.q.vec());
  j["q"] = q;
  atomic_write_file(path, j.dump(2) + "\n");
}

EmbeddingDump read_embedding_dump(const std::string& path) {
  ordered_json j;
  try {
    j = ordered_json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("embedding dump " + path + ": " + e.what());
  }
  auto need = [&](const char* key) -> const ordered_json& {
    auto it = j.find(key);
    if (it == j.end())
      throw IoError("embedding dump " + path + ": missing key '" + key + "'");
    return *it;
  };
  if (need("format").get<std::string>() != "rscl-embedding-dump-v1")
    throw IoError("embedding dump " + path + ": unsupported format tag");
  auto tensor_of = [&](const ordered_json& tj, const char* name) {
    auto sit = tj.find("shape");
    auto dit = tj.find("data");
    if (sit == tj.end() || dit == tj.end())
      throw IoError("embedding dump " + path + ": malformed tensor '" + name + "'");
    Shape shape = sit->get<Shape>();
    std::vector<double> data = base64_decode_doubles(dit->get<std::string>());
    std::size_t count = 1;
    for (std::size_t d : shape) count *= d;
    if (shape.size() != 2 || count != data.size())
      throw IoError("embedding dump " + path + ": tensor '" + name +
                    "' shape/data mismatch");
    return Tensor(std::move(shape), std::move(data));
  };
  EmbeddingDump dump;
  dump.checkpoint = need("checkpoint").get<std::string>();
  dump.dataset = need("dataset").get<std::string>();
  dump.window = need("window").get<int>();
  dump.x = tensor_of(need("x"), "x");
  dump.q = tensor_of(need("q"), "q");
  if (dump.x.rows() != dump.q.rows())
    throw IoError("embedding dump " + path + ": x and q row counts differ");
  return dump;
}

}  // namespace rscl
