#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "wr/features.hpp"

namespace wr {

// Visual vocabulary fitted by kmeans_fit. Centers are stored single-precision
// so the on-disk form round-trips exactly.
struct Codebook {
  int k = 0;
  int dim = 0;
  Eigen::MatrixXf centers;  // k x dim
  double inertia = 0.0;
  bool fitted = false;
  std::vector<double> inertia_history;  // per Lloyd iteration, not serialized
};

// Lloyd iterations from k-means++ seeding. Deterministic for a given seed:
// stops when the relative inertia change drops below 1e-6 or after 300
// iterations; a cluster that empties is re-seeded from the point farthest
// from its center. Throws TooFewSamples when rows < k.
Codebook kmeans_fit(const Eigen::MatrixXf& descriptors, int k, std::uint64_t seed);

// Nearest-center index per row; ties go to the lowest index.
std::vector<int> kmeans_assign(const Eigen::MatrixXf& descriptors, const Codebook& cb);

// Softmax-assignment encoder parameters. Either loaded from a trained export
// or seeded-random for tests; sharpened_params() reproduces hard VLAD in the
// large-scale limit.
struct SoftAssignParams {
  int k = 0;
  int dim = 0;
  Eigen::MatrixXf weights;  // k x dim
  Eigen::VectorXf biases;   // k
  Eigen::MatrixXf centers;  // k x dim
  bool use_residual = true;
};

SoftAssignParams random_soft_assign_params(int k, int dim, std::uint64_t seed,
                                           bool use_residual = true);

// weights_j = s * c_j, bias_j = -s * |c_j|^2 / 2: as s grows the softmax
// converges on the nearest-center indicator.
SoftAssignParams sharpened_params(const Codebook& cb, double scale,
                                  bool use_residual = true);

// One encoded sampling unit (or set). VLAD/soft-assign produce k*dim values,
// sum/GMP keep dim.
struct EncodedFeature {
  Eigen::VectorXd vector;
};

// Per-vector softmax assignments, n x k; every row sums to 1.
Eigen::MatrixXd soft_assignments(const Eigen::MatrixXf& vectors,
                                 const SoftAssignParams& p);

// Concatenated per-cluster residual sums before any normalization; exposed
// for direct inspection.
Eigen::VectorXd vlad_residuals(const LocalFeatureSet& set, const Codebook& cb);

// Hard-assignment VLAD: residual sums, per-cluster l2, then global l2. Zero
// blocks stay zero.
EncodedFeature vlad_encode(const LocalFeatureSet& set, const Codebook& cb);

// Softmax-weighted aggregation (residual or plain), normalized like VLAD.
EncodedFeature soft_assign_encode(const LocalFeatureSet& set,
                                  const SoftAssignParams& p);

// Generalized max pooling: the ridge solution xi = X^T (X X^T + lambda I)^-1 1,
// making the output invariant to feature repetition. lambda=0 falls back to
// a least-norm solve with an eigenvalue floor.
EncodedFeature gmp_encode(const LocalFeatureSet& set, double lambda = 1.0);

// Element-wise sum of all vectors.
EncodedFeature sum_encode(const LocalFeatureSet& set);

// Codebook / soft-assign parameter files: JSON tagged "format": "WRCB01",
// matrices embedded as base64 little-endian binary32 with explicit shapes.
void save_codebook(const Codebook& cb, const std::string& path);
Codebook load_codebook(const std::string& path);
void save_soft_assign_params(const SoftAssignParams& p, const std::string& path);
SoftAssignParams load_soft_assign_params(const std::string& path);

}  // namespace wr
