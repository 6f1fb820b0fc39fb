#include "wr/descriptor.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include <Eigen/Dense>

#include "wr/errors.hpp"
#include "wr/features.hpp"
#include "wr/log.hpp"

namespace fs = std::filesystem;

namespace wr {

std::string to_string(DescriptorStage stage) {
  switch (stage) {
    case DescriptorStage::raw: return "raw";
    case DescriptorStage::power_normalized: return "power_normalized";
    case DescriptorStage::whitened: return "whitened";
  }
  return "?";
}

PageDescriptor aggregate(const std::vector<EncodedFeature>& encoded,
                         const std::string& doc_id) {
  if (encoded.empty())
    throw EmptyPage("document " + doc_id + " contributed no sampling units");
  const Eigen::Index dim = encoded.front().vector.size();
  PageDescriptor d;
  d.doc_id = doc_id;
  d.stage = DescriptorStage::raw;
  d.vector = Eigen::VectorXd::Zero(dim);
  for (const auto& e : encoded) {
    if (e.vector.size() != dim)
      throw DimMismatch("document " + doc_id + ": encoded lengths differ (" +
                        std::to_string(e.vector.size()) + " vs " +
                        std::to_string(dim) + ")");
    d.vector += e.vector;
  }
  return d;
}

Eigen::VectorXd signed_power(const Eigen::VectorXd& v, double alpha) {
  Eigen::VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double x = v[i];
    out[i] = x == 0.0 ? 0.0 : std::copysign(std::pow(std::abs(x), alpha), x);
  }
  return out;
}

PageDescriptor power_normalize(const PageDescriptor& d, double alpha) {
  if (d.stage != DescriptorStage::raw)
    throw ValidationError("power_normalize expects a raw descriptor, got " +
                          to_string(d.stage));
  PageDescriptor out;
  out.doc_id = d.doc_id;
  out.stage = DescriptorStage::power_normalized;
  out.vector = signed_power(d.vector, alpha);
  const double norm = out.vector.norm();
  if (norm > 0.0)
    out.vector /= norm;
  else
    log::warn("document " + d.doc_id + ": zero descriptor after power normalization");
  return out;
}

Eigen::VectorXd WhiteningModel::transform(const Eigen::VectorXd& v) const {
  if (!fitted) throw ValidationError("whitening model used before fit");
  if (v.size() != basis.cols())
    throw DimMismatch("descriptor length " + std::to_string(v.size()) +
                      " vs whitening input dim " + std::to_string(basis.cols()));
  return basis * (v - mean);
}

namespace {

// Deterministic eigenvector sign: the largest-magnitude component is positive.
void fix_sign(Eigen::VectorXd& v) {
  Eigen::Index arg = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
  if (v[arg] < 0.0) v = -v;
}

}  // namespace

WhiteningModel whiten_fit(const std::vector<PageDescriptor>& descriptors) {
  if (descriptors.size() < 2)
    throw TooFewDescriptors("whitening needs at least 2 descriptors, got " +
                            std::to_string(descriptors.size()));
  const Eigen::Index dim = descriptors.front().vector.size();
  for (const auto& d : descriptors) {
    if (d.stage != DescriptorStage::power_normalized)
      throw ValidationError("whiten_fit expects power_normalized descriptors, " +
                            d.doc_id + " is " + to_string(d.stage));
    if (d.vector.size() != dim)
      throw DimMismatch("descriptor " + d.doc_id + " length differs");
  }

  const Eigen::Index n = static_cast<Eigen::Index>(descriptors.size());
  Eigen::MatrixXd x(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) = descriptors[static_cast<std::size_t>(i)].vector;

  WhiteningModel model;
  model.mean = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - model.mean.transpose();

  std::vector<std::pair<double, Eigen::VectorXd>> components;  // (eigenvalue, direction)
  if (n - 1 < dim) {
    // Fewer samples than dimensions: the covariance eigenproblem collapses
    // onto the n x n Gram matrix (same nonzero spectrum, far cheaper).
    const Eigen::MatrixXd gram = centered * centered.transpose() / double(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    for (Eigen::Index i = n - 1; i >= 0; --i) {
      const double ev = eig.eigenvalues()[i];
      if (ev < kWhiteningEigenvalueFloor) continue;
      Eigen::VectorXd dir =
          centered.transpose() * eig.eigenvectors().col(i) / std::sqrt(double(n - 1) * ev);
      fix_sign(dir);
      components.emplace_back(ev, std::move(dir));
    }
  } else {
    const Eigen::MatrixXd cov = centered.transpose() * centered / double(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    for (Eigen::Index i = dim - 1; i >= 0; --i) {
      const double ev = eig.eigenvalues()[i];
      if (ev < kWhiteningEigenvalueFloor) continue;
      Eigen::VectorXd dir = eig.eigenvectors().col(i);
      fix_sign(dir);
      components.emplace_back(ev, std::move(dir));
    }
  }

  if (components.size() < static_cast<std::size_t>(dim))
    log::info("whitening keeps " + std::to_string(components.size()) + " of " +
              std::to_string(dim) + " dimensions");

  model.basis.resize(static_cast<Eigen::Index>(components.size()), dim);
  for (std::size_t i = 0; i < components.size(); ++i)
    model.basis.row(static_cast<Eigen::Index>(i)) =
        components[i].second.transpose() / std::sqrt(components[i].first);
  model.fitted = true;
  return model;
}

PageDescriptor whiten_apply(const WhiteningModel& model, const PageDescriptor& d) {
  if (d.stage != DescriptorStage::power_normalized)
    throw ValidationError("whiten_apply expects a power_normalized descriptor, got " +
                          to_string(d.stage));
  PageDescriptor out;
  out.doc_id = d.doc_id;
  out.stage = DescriptorStage::whitened;
  out.vector = model.transform(d.vector);
  const double norm = out.vector.norm();
  if (norm > 0.0)
    out.vector /= norm;
  else
    log::warn("document " + d.doc_id + ": whitened descriptor is zero");
  return out;
}

Eigen::MatrixXd leave_one_out_similarities(
    const std::vector<PageDescriptor>& powered, int jobs) {
  if (powered.empty()) throw TooFewDescriptors("no descriptors to score");
  if (jobs < 1) throw InvalidParams("jobs must be >= 1");
  const Eigen::Index n = static_cast<Eigen::Index>(powered.size());

  const auto cosine = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double na = a.norm();
    const double nb = b.norm();
    return (na == 0.0 || nb == 0.0) ? 0.0 : a.dot(b) / (na * nb);
  };

  Eigen::MatrixXd sims(n, n);
  if (n < 3) {
    // Nothing left to fit a model on once the query is held out.
    for (Eigen::Index q = 0; q < n; ++q)
      for (Eigen::Index j = 0; j < n; ++j)
        sims(q, j) = q == j ? 1.0 : cosine(powered[static_cast<std::size_t>(q)].vector,
                                           powered[static_cast<std::size_t>(j)].vector);
    return sims;
  }

  const auto score_query = [&](std::size_t qi) {
    const Eigen::Index q = static_cast<Eigen::Index>(qi);
    std::vector<PageDescriptor> others;
    others.reserve(static_cast<std::size_t>(n) - 1);
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != q) others.push_back(powered[static_cast<std::size_t>(j)]);
    const WhiteningModel model = whiten_fit(others);
    const PageDescriptor wq = whiten_apply(model, powered[static_cast<std::size_t>(q)]);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == q) {
        sims(q, q) = 1.0;
        continue;
      }
      const PageDescriptor wj =
          whiten_apply(model, powered[static_cast<std::size_t>(j)]);
      sims(q, j) = cosine(wq.vector, wj.vector);
    }
  };

  const int workers = std::max(1, std::min(jobs, static_cast<int>(n)));
  if (workers == 1) {
    for (std::size_t q = 0; q < powered.size(); ++q) score_query(q);
    return sims;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t q = next.fetch_add(1);
        if (q >= powered.size()) return;
        try {
          score_query(q);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return sims;
}

void export_descriptors_csv(const std::vector<PageDescriptor>& descriptors,
                            const std::string& path) {
  std::string text;
  char buf[40];
  for (const auto& d : descriptors) {
    text += d.doc_id;
    for (Eigen::Index i = 0; i < d.vector.size(); ++i) {
      std::snprintf(buf, sizeof buf, ",%.17g", d.vector[i]);
      text += buf;
    }
    text += '\n';
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out << text;
  }
  fs::rename(tmp, path);
}

void export_descriptors_wrfeat(const std::vector<PageDescriptor>& descriptors,
                               const std::string& dir) {
  fs::create_directories(dir);
  for (const auto& d : descriptors) {
    LocalFeatureSet set;
    set.doc_id = d.doc_id;
    set.dim = static_cast<int>(d.vector.size());
    set.vectors = d.vector.cast<float>().transpose();
    set.origins.push_back({0.0f, 0.0f, kOriginPageDescriptor});
    export_features(set, (fs::path(dir) / (d.doc_id + ".wrfeat")).string());
  }
}

}  // namespace wr
