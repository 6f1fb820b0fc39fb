#include "wr/encoding.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "wr/errors.hpp"
#include "wr/log.hpp"
#include "wr/rng.hpp"
#include "wr/version.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace wr {

namespace {

constexpr double kInertiaRelTol = 1e-6;
constexpr int kMaxLloydIterations = 300;
constexpr double kGmpEigenFloor = 1e-10;

int nearest_center(const Eigen::RowVectorXd& x, const Eigen::MatrixXd& centers) {
  int best = 0;
  double best_d = (x - centers.row(0)).squaredNorm();
  for (int j = 1; j < centers.rows(); ++j) {
    const double d = (x - centers.row(j)).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

}  // namespace

Codebook kmeans_fit(const Eigen::MatrixXf& descriptors, int k, std::uint64_t seed) {
  if (k < 1) throw InvalidParams("kmeans needs k >= 1");
  const Eigen::Index n = descriptors.rows();
  const Eigen::Index dim = descriptors.cols();
  if (n < k)
    throw TooFewSamples(std::to_string(n) + " descriptors for k=" + std::to_string(k));

  const Eigen::MatrixXd x = descriptors.cast<double>();
  Rng rng(seed);

  // k-means++ seeding: each next center sampled proportional to the squared
  // distance from the already chosen ones.
  Eigen::MatrixXd centers(k, dim);
  centers.row(0) = x.row(static_cast<Eigen::Index>(rng.uniform_index(
      static_cast<std::uint64_t>(n))));
  Eigen::VectorXd dist2(n);
  for (Eigen::Index i = 0; i < n; ++i)
    dist2[i] = (x.row(i) - centers.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = dist2.sum();
    Eigen::Index pick = n - 1;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += dist2[i];
        if (r < acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(n)));
    }
    centers.row(c) = x.row(pick);
    for (Eigen::Index i = 0; i < n; ++i)
      dist2[i] = std::min(dist2[i], (x.row(i) - centers.row(c)).squaredNorm());
  }

  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  std::vector<double> history;
  double prev_inertia = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < kMaxLloydIterations; ++iter) {
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = (x.row(i) - centers.row(0)).squaredNorm();
      for (int j = 1; j < k; ++j) {
        const double d = (x.row(i) - centers.row(j)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      assign[static_cast<std::size_t>(i)] = best;
      dist2[i] = best_d;
      inertia += best_d;
    }
    history.push_back(inertia);

    if (std::isfinite(prev_inertia) &&
        std::abs(prev_inertia - inertia) <= kInertiaRelTol * std::max(prev_inertia, 1e-300))
      break;
    prev_inertia = inertia;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, dim);
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += x.row(i);
      counts[assign[static_cast<std::size_t>(i)]] += 1;
    }
    for (int j = 0; j < k; ++j) {
      if (counts[j] > 0) {
        centers.row(j) = sums.row(j) / counts[j];
      } else {
        // Re-seed an empty cluster from the point currently worst served.
        Eigen::Index far = 0;
        for (Eigen::Index i = 1; i < n; ++i)
          if (dist2[i] > dist2[far]) far = i;
        centers.row(j) = x.row(far);
        dist2[far] = -1.0;  // keep later empty clusters off the same point
      }
    }
  }

  Codebook cb;
  cb.k = k;
  cb.dim = static_cast<int>(dim);
  cb.centers = centers.cast<float>();
  cb.fitted = true;
  cb.inertia_history = std::move(history);

  // Final inertia against the stored single-precision centers.
  const Eigen::MatrixXd stored = cb.centers.cast<double>();
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    inertia += (x.row(i) - stored.row(nearest_center(x.row(i), stored))).squaredNorm();
  cb.inertia = inertia;
  return cb;
}

std::vector<int> kmeans_assign(const Eigen::MatrixXf& descriptors, const Codebook& cb) {
  if (!cb.fitted) throw ValidationError("codebook used before fit");
  if (descriptors.cols() != cb.dim)
    throw DimMismatch("descriptor dim " + std::to_string(descriptors.cols()) +
                      " vs codebook dim " + std::to_string(cb.dim));
  const Eigen::MatrixXd centers = cb.centers.cast<double>();
  std::vector<int> out(static_cast<std::size_t>(descriptors.rows()));
  for (Eigen::Index i = 0; i < descriptors.rows(); ++i)
    out[static_cast<std::size_t>(i)] =
        nearest_center(descriptors.row(i).cast<double>(), centers);
  return out;
}

SoftAssignParams random_soft_assign_params(int k, int dim, std::uint64_t seed,
                                           bool use_residual) {
  if (k < 1 || dim < 1) throw InvalidParams("soft-assign params need k,dim >= 1");
  Rng rng(seed);
  SoftAssignParams p;
  p.k = k;
  p.dim = dim;
  p.use_residual = use_residual;
  const double w_scale = 1.0 / std::sqrt(static_cast<double>(dim));
  p.weights.resize(k, dim);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < dim; ++j)
      p.weights(i, j) = static_cast<float>(rng.normal() * w_scale);
  p.biases.resize(k);
  for (int i = 0; i < k; ++i) p.biases[i] = static_cast<float>(rng.normal() * 0.1);
  p.centers.resize(k, dim);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < dim; ++j) p.centers(i, j) = static_cast<float>(rng.normal());
  return p;
}

SoftAssignParams sharpened_params(const Codebook& cb, double scale, bool use_residual) {
  if (!cb.fitted) throw ValidationError("codebook used before fit");
  SoftAssignParams p;
  p.k = cb.k;
  p.dim = cb.dim;
  p.use_residual = use_residual;
  p.centers = cb.centers;
  p.weights = (cb.centers.cast<double>() * scale).cast<float>();
  p.biases.resize(cb.k);
  for (int j = 0; j < cb.k; ++j)
    p.biases[j] = static_cast<float>(
        -0.5 * scale * cb.centers.row(j).cast<double>().squaredNorm());
  return p;
}

Eigen::MatrixXd soft_assignments(const Eigen::MatrixXf& vectors,
                                 const SoftAssignParams& p) {
  if (vectors.cols() != p.dim)
    throw DimMismatch("vector dim " + std::to_string(vectors.cols()) +
                      " vs params dim " + std::to_string(p.dim));
  if (p.weights.rows() != p.k || p.weights.cols() != p.dim ||
      p.centers.rows() != p.k || p.centers.cols() != p.dim || p.biases.size() != p.k)
    throw ValidationError("soft-assign parameter shapes inconsistent");

  Eigen::MatrixXd logits = vectors.cast<double>() * p.weights.cast<double>().transpose();
  logits.rowwise() += p.biases.cast<double>().transpose();

  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
    logits.row(i) = e / e.sum();
  }
  return logits;
}

namespace {

// Per-block l2 followed by global l2; all-zero blocks pass through.
void block_normalize(Eigen::VectorXd& v, int k, int dim) {
  for (int j = 0; j < k; ++j) {
    auto block = v.segment(static_cast<Eigen::Index>(j) * dim, dim);
    const double norm = block.norm();
    if (norm > 0.0) block /= norm;
  }
  const double total = v.norm();
  if (total > 0.0) v /= total;
}

}  // namespace

Eigen::VectorXd vlad_residuals(const LocalFeatureSet& set, const Codebook& cb) {
  if (!cb.fitted) throw ValidationError("codebook used before fit");
  if (set.dim != cb.dim)
    throw DimMismatch("set dim " + std::to_string(set.dim) + " vs codebook dim " +
                      std::to_string(cb.dim));
  const Eigen::MatrixXd centers = cb.centers.cast<double>();
  std::vector<std::vector<Eigen::RowVectorXd>> residuals(
      static_cast<std::size_t>(cb.k));
  for (Eigen::Index i = 0; i < set.vectors.rows(); ++i) {
    const Eigen::RowVectorXd x = set.vectors.row(i).cast<double>();
    const int j = nearest_center(x, centers);
    residuals[static_cast<std::size_t>(j)].push_back(x - centers.row(j));
  }
  // Accumulate each block in a canonical (lexicographic) order so the
  // encoding is exactly invariant to permutations of the input vectors, not
  // just up to floating-point reassociation.
  const auto lex_less = [](const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
    for (Eigen::Index c = 0; c < a.size(); ++c) {
      if (a[c] != b[c]) return a[c] < b[c];
    }
    return false;
  };
  Eigen::VectorXd out =
      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cb.k) * cb.dim);
  for (int j = 0; j < cb.k; ++j) {
    auto& block = residuals[static_cast<std::size_t>(j)];
    std::sort(block.begin(), block.end(), lex_less);
    for (const auto& r : block) {
      out.segment(static_cast<Eigen::Index>(j) * cb.dim, cb.dim) += r.transpose();
    }
  }
  return out;
}

EncodedFeature vlad_encode(const LocalFeatureSet& set, const Codebook& cb) {
  EncodedFeature enc;
  enc.vector = vlad_residuals(set, cb);
  block_normalize(enc.vector, cb.k, cb.dim);
  return enc;
}

EncodedFeature soft_assign_encode(const LocalFeatureSet& set,
                                  const SoftAssignParams& p) {
  if (set.dim != p.dim)
    throw DimMismatch("set dim " + std::to_string(set.dim) + " vs params dim " +
                      std::to_string(p.dim));
  const Eigen::MatrixXd a = soft_assignments(set.vectors, p);
  const Eigen::MatrixXd centers = p.centers.cast<double>();

  EncodedFeature enc;
  enc.vector = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.k) * p.dim);
  for (Eigen::Index i = 0; i < set.vectors.rows(); ++i) {
    const Eigen::RowVectorXd x = set.vectors.row(i).cast<double>();
    for (int j = 0; j < p.k; ++j) {
      auto block = enc.vector.segment(static_cast<Eigen::Index>(j) * p.dim, p.dim);
      if (p.use_residual)
        block += a(i, j) * (x - centers.row(j)).transpose();
      else
        block += a(i, j) * x.transpose();
    }
  }
  block_normalize(enc.vector, p.k, p.dim);
  return enc;
}

EncodedFeature gmp_encode(const LocalFeatureSet& set, double lambda) {
  if (set.empty()) throw EmptySet("gmp over an empty feature set");
  if (lambda < 0.0) throw InvalidParams("gmp lambda must be non-negative");

  const Eigen::MatrixXd x = set.vectors.cast<double>();
  const Eigen::Index n = x.rows();
  const Eigen::MatrixXd gram = x * x.transpose();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);

  Eigen::VectorXd y;
  if (lambda > 0.0) {
    Eigen::MatrixXd sys = gram;
    sys.diagonal().array() += lambda;
    y = Eigen::LDLT<Eigen::MatrixXd>(sys).solve(ones);
  } else {
    // Least-norm solution through the eigen-decomposition; directions with
    // eigenvalues under the floor are dropped, which also absorbs the
    // rank deficiency duplicate features introduce.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    const Eigen::VectorXd& ev = eig.eigenvalues();
    const double floor = kGmpEigenFloor * std::max(1.0, ev.cwiseAbs().maxCoeff());
    y = Eigen::VectorXd::Zero(n);
    bool any = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (ev[i] <= floor) continue;
      any = true;
      const Eigen::VectorXd u = eig.eigenvectors().col(i);
      y += u * (u.dot(ones) / ev[i]);
    }
    if (!any) throw SingularSystem("gmp: feature gram matrix has no usable spectrum");
  }

  EncodedFeature enc;
  enc.vector = x.transpose() * y;
  return enc;
}

EncodedFeature sum_encode(const LocalFeatureSet& set) {
  if (set.empty()) throw EmptySet("sum over an empty feature set");
  EncodedFeature enc;
  enc.vector = Eigen::VectorXd::Zero(set.vectors.cols());
  for (Eigen::Index i = 0; i < set.vectors.rows(); ++i)
    enc.vector += set.vectors.row(i).cast<double>().transpose();
  return enc;
}

namespace {

const char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const unsigned char* data, std::size_t len) {
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= len; i += 3) {
    const unsigned v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
    out += kB64Alphabet[(v >> 18) & 63];
    out += kB64Alphabet[(v >> 12) & 63];
    out += kB64Alphabet[(v >> 6) & 63];
    out += kB64Alphabet[v & 63];
  }
  if (i + 1 == len) {
    const unsigned v = data[i] << 16;
    out += kB64Alphabet[(v >> 18) & 63];
    out += kB64Alphabet[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == len) {
    const unsigned v = (data[i] << 16) | (data[i + 1] << 8);
    out += kB64Alphabet[(v >> 18) & 63];
    out += kB64Alphabet[(v >> 12) & 63];
    out += kB64Alphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  static const auto value_of = [] {
    std::array<int, 256> t{};
    t.fill(-1);
    for (int i = 0; i < 64; ++i) t[static_cast<unsigned char>(kB64Alphabet[i])] = i;
    return t;
  }();
  if (text.size() % 4 != 0) throw ParseError("base64 length not a multiple of 4");
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int vals[4];
    int pad = 0;
    for (int j = 0; j < 4; ++j) {
      const char c = text[i + j];
      if (c == '=') {
        if (i + 4 != text.size() || j < 2) throw ParseError("misplaced base64 padding");
        vals[j] = 0;
        ++pad;
      } else {
        if (pad > 0) throw ParseError("base64 data after padding");
        vals[j] = value_of[static_cast<unsigned char>(c)];
        if (vals[j] < 0) throw ParseError("invalid base64 character");
      }
    }
    const unsigned v = (vals[0] << 18) | (vals[1] << 12) | (vals[2] << 6) | vals[3];
    out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
    if (pad < 2) out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<unsigned char>(v & 0xff));
  }
  return out;
}

ordered_json matrix_to_json(const Eigen::MatrixXf& m) {
  std::vector<unsigned char> bytes(static_cast<std::size_t>(m.size()) * 4);
  std::size_t off = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j, off += 4) {
      std::uint32_t u;
      const float f = m(i, j);
      std::memcpy(&u, &f, 4);
      bytes[off] = static_cast<unsigned char>(u & 0xff);
      bytes[off + 1] = static_cast<unsigned char>((u >> 8) & 0xff);
      bytes[off + 2] = static_cast<unsigned char>((u >> 16) & 0xff);
      bytes[off + 3] = static_cast<unsigned char>((u >> 24) & 0xff);
    }
  }
  return ordered_json{{"rows", m.rows()},
                      {"cols", m.cols()},
                      {"data", base64_encode(bytes.data(), bytes.size())}};
}

Eigen::MatrixXf matrix_from_json(const ordered_json& j, const std::string& what) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data"))
    throw ParseError(what + ": matrix needs rows/cols/data");
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  if (rows < 0 || cols < 0) throw ParseError(what + ": negative matrix shape");
  const auto bytes = base64_decode(j.at("data").get<std::string>());
  if (bytes.size() != static_cast<std::size_t>(rows) * cols * 4)
    throw ParseError(what + ": matrix payload does not match its shape");
  Eigen::MatrixXf m(rows, cols);
  std::size_t off = 0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j2 = 0; j2 < cols; ++j2, off += 4) {
      const std::uint32_t u = static_cast<std::uint32_t>(bytes[off]) |
                              (static_cast<std::uint32_t>(bytes[off + 1]) << 8) |
                              (static_cast<std::uint32_t>(bytes[off + 2]) << 16) |
                              (static_cast<std::uint32_t>(bytes[off + 3]) << 24);
      float f;
      std::memcpy(&f, &u, 4);
      if (!std::isfinite(f)) throw ValidationError(what + ": non-finite matrix entry");
      m(i, j2) = f;
    }
  }
  return m;
}

void write_json_atomic(const ordered_json& j, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out << j.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

ordered_json read_wrcb_json(const std::string& path, const std::string& kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (!j.is_object() || j.value("format", "") != std::string(kCodebookFormat))
    throw BadMagic(path + ": missing \"format\": \"" + kCodebookFormat + "\"");
  if (j.value("kind", "") != kind)
    throw ParseError(path + ": expected kind \"" + kind + "\"");
  return j;
}

}  // namespace

void save_codebook(const Codebook& cb, const std::string& path) {
  if (!cb.fitted) throw ValidationError("refusing to save an unfitted codebook");
  ordered_json j{{"format", kCodebookFormat},
                 {"kind", "codebook"},
                 {"k", cb.k},
                 {"dim", cb.dim},
                 {"inertia", cb.inertia},
                 {"centers", matrix_to_json(cb.centers)}};
  write_json_atomic(j, path);
}

Codebook load_codebook(const std::string& path) {
  const ordered_json j = read_wrcb_json(path, "codebook");
  Codebook cb;
  try {
    cb.k = j.at("k").get<int>();
    cb.dim = j.at("dim").get<int>();
    cb.inertia = j.at("inertia").get<double>();
    cb.centers = matrix_from_json(j.at("centers"), path);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (cb.k < 1 || cb.centers.rows() != cb.k || cb.centers.cols() != cb.dim)
    throw ParseError(path + ": codebook shape fields disagree with the matrix");
  cb.fitted = true;
  return cb;
}

void save_soft_assign_params(const SoftAssignParams& p, const std::string& path) {
  Eigen::MatrixXf biases(p.biases.size(), 1);
  biases.col(0) = p.biases;
  ordered_json j{{"format", kCodebookFormat},
                 {"kind", "soft_assign"},
                 {"k", p.k},
                 {"dim", p.dim},
                 {"use_residual", p.use_residual},
                 {"weights", matrix_to_json(p.weights)},
                 {"biases", matrix_to_json(biases)},
                 {"centers", matrix_to_json(p.centers)}};
  write_json_atomic(j, path);
}

SoftAssignParams load_soft_assign_params(const std::string& path) {
  const ordered_json j = read_wrcb_json(path, "soft_assign");
  SoftAssignParams p;
  Eigen::MatrixXf biases;
  try {
    p.k = j.at("k").get<int>();
    p.dim = j.at("dim").get<int>();
    p.use_residual = j.at("use_residual").get<bool>();
    p.weights = matrix_from_json(j.at("weights"), path);
    biases = matrix_from_json(j.at("biases"), path);
    p.centers = matrix_from_json(j.at("centers"), path);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (p.k < 1 || p.weights.rows() != p.k || p.weights.cols() != p.dim ||
      p.centers.rows() != p.k || p.centers.cols() != p.dim || biases.rows() != p.k ||
      biases.cols() != 1)
    throw ParseError(path + ": parameter shape fields disagree with the matrices");
  p.biases = biases.col(0);
  return p;
}

}  // namespace wr
