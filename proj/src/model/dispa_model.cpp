#include "dispa/model/dispa_model.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "dispa/util/csv.hpp"
#include "dispa/util/error.hpp"
#include "dispa/util/hash.hpp"
#include "dispa/util/random.hpp"

namespace dispa::model {

using ad::Matrix;
using ad::Tensor;

void ModelConfig::validate() const {
  if (n_p == 0 || n_g == 0 || d_e == 0) throw ShapeError("model config: n_p, n_g and d_e must be positive");
  if (d_a == 0) throw ShapeError("model config: d_a must be positive");
  if (heads == 0 || attn_width() % heads != 0) throw ShapeError("model config: heads must divide the attention width");
  if (layers != 1) throw Error("model config: only a single attention layer is implemented");
  if (dropout != 0.0) throw Error("model config: dropout is not implemented");
  if (!std::isfinite(lambda_init)) throw Error("model config: lambda_init must be finite");
  if (lambda_override && !std::isfinite(*lambda_override)) throw Error("model config: lambda override must be finite");
}

std::string ModelConfig::canonical() const {
  std::ostringstream s;
  s << "n_p=" << n_p << ";n_g=" << n_g << ";d_e=" << d_e << ";d_a=" << d_a << ";d=" << attn_width()
    << ";heads=" << heads << ";layers=" << layers << ";head_hidden=" << hidden_width()
    << ";lambda_init=" << csv::format_double(lambda_init)
    << ";lambda_override=" << (lambda_override ? csv::format_double(*lambda_override) : "none")
    << ";layer_norm=" << (layer_norm ? 1 : 0);
  return s.str();
}

std::uint64_t ModelConfig::hash() const { return hash::hash_bytes(canonical()); }

namespace {

constexpr std::array<const char*, kParamCount> kNames = {
    "path.w1", "path.b1", "path.w2", "path.b2", "drug.w1", "drug.b1", "drug.w2", "drug.b2",
    "sub.w1",  "sub.b1",  "sub.w2",  "sub.b2",  "p2s.wq",  "p2s.wk",  "p2s.wv",  "p2s.lq1",
    "p2s.lk1", "p2s.lq2", "p2s.lk2", "d2p.wq",  "d2p.wk",  "d2p.wv",  "d2p.lq1", "d2p.lk1",
    "d2p.lq2", "d2p.lk2", "head.w1", "head.b1", "head.w2", "head.b2"};

struct Shape {
  std::size_t rows, cols;
  bool weight;  // Xavier-initialised
  bool lambda;  // N(0, 0.1)
};

std::array<Shape, kParamCount> shapes(const ModelConfig& c) {
  const auto da = c.d_a, d = c.attn_width(), h = c.hidden_width();
  std::array<Shape, kParamCount> s{};
  auto encoder = [&](std::size_t base, std::size_t in) {
    s[base] = {in, da, true, false};
    s[base + 1] = {1, da, false, false};
    s[base + 2] = {da, da, true, false};
    s[base + 3] = {1, da, false, false};
  };
  encoder(kPathW1, c.n_g);
  encoder(kDrugW1, c.d_e);
  encoder(kSubW1, c.d_e);
  auto attention = [&](std::size_t base) {
    for (std::size_t k = 0; k < 3; ++k) s[base + k] = {da, 2 * d, true, false};
    for (std::size_t k = 3; k < 7; ++k) s[base + k] = {1, d, false, true};
  };
  attention(kP2SWq);
  attention(kD2PWq);
  s[kHeadW1] = {c.concat_width(), h, true, false};
  s[kHeadB1] = {1, h, false, false};
  s[kHeadW2] = {h, 1, true, false};
  s[kHeadB2] = {1, 1, false, false};
  return s;
}

Tensor ffn(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2) {
  return ad::add_row(ad::matmul(ad::relu(ad::add_row(ad::matmul(x, w1), b1)), w2), b2);
}

void check_input(const Tensor& t, std::size_t cols, const char* what) {
  if (t.rows() == 0) throw ShapeError(std::string(what) + " has no rows");
  if (t.cols() != cols) {
    throw ShapeError(std::string(what) + " has " + std::to_string(t.cols()) + " columns, model expects " +
                     std::to_string(cols));
  }
}

void accumulate(Matrix& into, const Matrix& m, double w) {
  if (into.empty()) into = Matrix(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) into.data()[i] += w * m.data()[i];
}

}  // namespace

const char* param_name(std::size_t id) {
  if (id >= kParamCount) throw Error("parameter id out of range");
  return kNames[id];
}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams p;
  p.config = config;
  rnd::Engine rng(seed);
  const auto s = shapes(config);
  for (std::size_t i = 0; i < kParamCount; ++i) {
    Matrix m(s[i].rows, s[i].cols);
    if (s[i].weight) {
      const double a = std::sqrt(6.0 / static_cast<double>(s[i].rows + s[i].cols));
      for (auto& x : m.data()) x = (2.0 * rnd::uniform01(rng) - 1.0) * a;
    } else if (s[i].lambda) {
      for (auto& x : m.data()) x = 0.1 * rnd::normal(rng);
    }
    p.tensors[i] = std::move(m);
  }
  return p;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& m : tensors) n += m.size();
  return n;
}

BoundParams bind(ad::Tape& tape, const ModelParams& params, bool trainable) {
  BoundParams b;
  b.config = &params.config;
  for (std::size_t i = 0; i < kParamCount; ++i) {
    b.t[i] = trainable ? tape.variable(params.tensors[i]) : tape.constant(params.tensors[i]);
  }
  return b;
}

EncodedFeatures encode_features(const BoundParams& p, const Tensor& e_path, const Tensor& e_drug, const Tensor& e_sub) {
  const auto& c = *p.config;
  check_input(e_path, c.n_g, "E_path");
  check_input(e_drug, c.d_e, "E_drug");
  check_input(e_sub, c.d_e, "E_sub");
  if (e_path.rows() != c.n_p) throw ShapeError("E_path has " + std::to_string(e_path.rows()) + " pathway rows, model expects " + std::to_string(c.n_p));
  if (e_drug.rows() != 1) throw ShapeError("E_drug must be a single row");
  const auto& t = p.t;
  return EncodedFeatures{ffn(e_path, t[kPathW1], t[kPathB1], t[kPathW2], t[kPathB2]),
                         ffn(e_drug, t[kDrugW1], t[kDrugB1], t[kDrugW2], t[kDrugB2]),
                         ffn(e_sub, t[kSubW1], t[kSubB1], t[kSubW2], t[kSubB2])};
}

AttentionOutput diff_attention(const BoundParams& p, View view, const Tensor& q_in, const Tensor& kv_in) {
  const auto& c = *p.config;
  const std::size_t base = view == View::kPath2Sub ? kP2SWq : kD2PWq;
  const auto& wq = p.t[base];
  if (q_in.cols() != wq.rows() || kv_in.cols() != wq.rows()) throw ShapeError("diff_attention: input width differs from d_a");
  if (q_in.rows() == 0 || kv_in.rows() == 0) throw ShapeError("diff_attention: empty queries or keys");
  ad::Tape& tape = *q_in.tape();
  const std::size_t d = c.attn_width(), dh = d / c.heads;

  const Tensor q = ad::matmul(q_in, wq);
  const Tensor k = ad::matmul(kv_in, p.t[base + 1]);
  const Tensor v = ad::matmul(kv_in, p.t[base + 2]);
  const Tensor v_red = ad::add(ad::slice_cols(v, 0, d), ad::slice_cols(v, d, d));

  Tensor lambda;
  if (c.lambda_override) {
    lambda = tape.constant(Matrix(1, 1, *c.lambda_override));
  } else {
    const Tensor l1 = ad::exp(ad::matmul_nt(p.t[base + 3], p.t[base + 4]));
    const Tensor l2 = ad::exp(ad::matmul_nt(p.t[base + 5], p.t[base + 6]));
    lambda = ad::clamp(ad::add(ad::sub(l1, l2), tape.constant(Matrix(1, 1, c.lambda_init))), 0.0, 0.99);
  }

  AttentionOutput out;
  out.components.lambda = lambda.value()(0, 0);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const double head_w = 1.0 / static_cast<double>(c.heads);
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < c.heads; ++h) {
    const std::size_t off = h * dh;
    const Tensor s1 = ad::softmax_rows(
        ad::scale(ad::matmul_nt(ad::slice_cols(q, off, dh), ad::slice_cols(k, off, dh)), inv_sqrt));
    const Tensor s2 = ad::softmax_rows(
        ad::scale(ad::matmul_nt(ad::slice_cols(q, d + off, dh), ad::slice_cols(k, d + off, dh)), inv_sqrt));
    const Tensor net = ad::sub(s1, ad::mul_scalar(s2, lambda));
    heads.push_back(ad::matmul(net, c.heads == 1 ? v_red : ad::slice_cols(v_red, off, dh)));
    accumulate(out.components.softmax1, s1.value(), head_w);
    accumulate(out.components.softmax2, s2.value(), head_w);
    accumulate(out.components.net, net.value(), head_w);
  }
  out.output = c.heads == 1 ? heads[0] : ad::concat_cols(heads);
  return out;
}

AttentionOutput path2sub(const BoundParams& p, const Tensor& h_path, const Tensor& h_sub) {
  return diff_attention(p, View::kPath2Sub, h_path, h_sub);
}

AttentionOutput drug2path(const BoundParams& p, const Tensor& h_drug, const Tensor& h_path) {
  return diff_attention(p, View::kDrug2Path, h_drug, h_path);
}

ForwardResult forward(const BoundParams& p, const Tensor& e_path, const Tensor& e_drug, const Tensor& e_sub) {
  const auto enc = encode_features(p, e_path, e_drug, e_sub);
  auto ps = path2sub(p, enc.path, enc.sub);
  auto dp = drug2path(p, enc.drug, enc.path);
  const std::array<Tensor, 3> parts{ad::mean_rows(ps.output), dp.output, ad::mean_rows(enc.sub)};
  Tensor z = ad::concat_cols(parts);
  if (p.config->layer_norm) z = ad::layer_norm_rows(z);
  const auto& t = p.t;
  ForwardResult r{ffn(z, t[kHeadW1], t[kHeadB1], t[kHeadW2], t[kHeadB2]), {}};
  r.record.path2sub = std::move(ps.components);
  r.record.drug2path = std::move(dp.components);
  return r;
}

double predict(const ModelParams& params, const Matrix& e_path, const Matrix& e_drug, const Matrix& e_sub,
               AttentionRecord* record) {
  ad::Tape tape;
  const auto b = bind(tape, params, false);
  auto r = forward(b, tape.constant(e_path), tape.constant(e_drug), tape.constant(e_sub));
  if (record != nullptr) {
    record->path2sub = std::move(r.record.path2sub);
    record->drug2path = std::move(r.record.drug2path);
  }
  return r.prediction.value()(0, 0);
}

// ---- checkpoint ----------------------------------------------------------------

namespace {

constexpr const char* kMagic = "dispa-checkpoint";
constexpr int kVersion = 1;

std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_hexfloat(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || !std::isfinite(v)) throw DataError(where + ": bad value '" + s + "'");
  return v;
}

std::size_t parse_size(const std::string& s, const std::string& where) {
  const auto v = csv::parse_int(s, where);
  if (v < 0) throw DataError(where + ": negative value");
  return static_cast<std::size_t>(v);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const CheckpointMeta& meta) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  const auto& c = params.config;
  out << kMagic << ' ' << kVersion << '\n';
  out << "config " << c.canonical() << '\n';
  out << "config_hash " << hash::to_hex(c.hash()) << '\n';
  out << "lambda_init " << hexfloat(c.lambda_init) << '\n';
  out << "lambda_override " << (c.lambda_override ? hexfloat(*c.lambda_override) : "none") << '\n';
  out << "stats_ref " << (meta.stats_ref.empty() ? "-" : meta.stats_ref) << '\n';
  out << "note " << (meta.note.empty() ? "-" : meta.note) << '\n';
  for (std::size_t i = 0; i < kParamCount; ++i) {
    const auto& m = params.tensors[i];
    out << "param " << kNames[i] << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
      for (std::size_t col = 0; col < m.cols(); ++col) out << (col ? " " : "") << hexfloat(m(r, col));
      out << '\n';
    }
  }
  out << "end\n";
  if (!out) throw Error("failed writing " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  const std::string src = path.string();
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> std::istringstream {
    if (!std::getline(in, line)) throw DataError(src + ": truncated checkpoint");
    ++lineno;
    return std::istringstream(line);
  };
  auto where = [&] { return src + ":" + std::to_string(lineno); };
  auto expect_key = [&](std::istringstream& s, const char* key) {
    std::string k;
    s >> k;
    if (k != key) throw DataError(where() + ": expected '" + key + "'");
    std::string rest;
    std::getline(s >> std::ws, rest);
    return rest;
  };

  {
    auto s = next();
    std::string magic;
    int version = 0;
    s >> magic >> version;
    if (magic != kMagic) throw DataError(src + ": not a checkpoint");
    if (version != kVersion) throw DataError(src + ": unsupported checkpoint version " + std::to_string(version));
  }
  ModelConfig c;
  std::string canonical, stored_hash;
  {
    auto s = next();
    canonical = expect_key(s, "config");
  }
  {
    auto s = next();
    stored_hash = expect_key(s, "config_hash");
  }
  // parse integer fields from the canonical string
  std::map<std::string, std::string> kv;
  {
    std::istringstream cs(canonical);
    std::string item;
    while (std::getline(cs, item, ';')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw DataError(src + ": malformed config");
      kv[item.substr(0, eq)] = item.substr(eq + 1);
    }
  }
  auto get = [&](const char* k) {
    auto it = kv.find(k);
    if (it == kv.end()) throw DataError(src + ": config lacks '" + k + "'");
    return parse_size(it->second, src + " config " + k);
  };
  c.n_p = get("n_p");
  c.n_g = get("n_g");
  c.d_e = get("d_e");
  c.d_a = get("d_a");
  c.d = get("d");
  c.heads = get("heads");
  c.layers = get("layers");
  c.head_hidden = get("head_hidden");
  c.layer_norm = get("layer_norm") != 0;
  {
    auto s = next();
    c.lambda_init = parse_hexfloat(expect_key(s, "lambda_init"), where());
  }
  {
    auto s = next();
    const auto v = expect_key(s, "lambda_override");
    if (v != "none") c.lambda_override = parse_hexfloat(v, where());
  }
  CheckpointMeta m;
  {
    auto s = next();
    m.stats_ref = expect_key(s, "stats_ref");
    if (m.stats_ref == "-") m.stats_ref.clear();
  }
  {
    auto s = next();
    m.note = expect_key(s, "note");
    if (m.note == "-") m.note.clear();
  }
  if (c.canonical() != canonical || hash::to_hex(c.hash()) != stored_hash) {
    throw DataError(src + ": config hash does not match its config line");
  }
  c.validate();
  ModelParams p;
  p.config = c;
  const auto expected = shapes(c);
  for (std::size_t i = 0; i < kParamCount; ++i) {
    auto s = next();
    std::string key, name;
    std::size_t rows = 0, cols = 0;
    s >> key >> name >> rows >> cols;
    if (key != "param" || name != kNames[i]) throw DataError(where() + ": expected parameter " + kNames[i]);
    if (rows != expected[i].rows || cols != expected[i].cols) throw DataError(where() + ": shape of " + name + " disagrees with config");
    Matrix mat(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      auto rs = next();
      std::string tok;
      for (std::size_t col = 0; col < cols; ++col) {
        if (!(rs >> tok)) throw DataError(where() + ": short row");
        mat(r, col) = parse_hexfloat(tok, where());
      }
    }
    p.tensors[i] = std::move(mat);
  }
  {
    auto s = next();
    std::string k;
    s >> k;
    if (k != "end") throw DataError(where() + ": expected end marker");
  }
  if (meta != nullptr) *meta = std::move(m);
  return p;
}

}  // namespace dispa::model
