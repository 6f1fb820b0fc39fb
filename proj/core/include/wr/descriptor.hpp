#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "wr/encoding.hpp"

namespace wr {

// The global descriptor passes through a fixed stage order:
// aggregate (raw) -> power_normalize (+l2) -> whiten_apply (+l2).
enum class DescriptorStage { raw, power_normalized, whitened };

std::string to_string(DescriptorStage stage);

struct PageDescriptor {
  std::string doc_id;
  Eigen::VectorXd vector;
  DescriptorStage stage = DescriptorStage::raw;
};

// Element-wise sum of the per-unit encodings of one document. Throws
// EmptyPage when the document contributed no sampling units.
PageDescriptor aggregate(const std::vector<EncodedFeature>& encoded,
                         const std::string& doc_id);

// sign(x)|x|^alpha on each component, then l2 normalization.
PageDescriptor power_normalize(const PageDescriptor& d, double alpha = 0.4);

// The bare component transform, before l2 (exposed for direct checks).
Eigen::VectorXd signed_power(const Eigen::VectorXd& v, double alpha);

// PCA whitening: project onto eigenvectors scaled by inverse sqrt
// eigenvalues. Eigenvalues under the floor are dropped, so the output can be
// shorter than the input.
struct WhiteningModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd basis;  // d_out x d_in
  bool fitted = false;

  Eigen::Index input_dim() const { return basis.cols(); }
  Eigen::Index output_dim() const { return basis.rows(); }

  // (v - mean) through the basis; no normalization (whiten_apply adds l2).
  Eigen::VectorXd transform(const Eigen::VectorXd& v) const;
};

inline constexpr double kWhiteningEigenvalueFloor = 1e-8;

// Fits on >= 2 power-normalized descriptors (covariance with the 1/(N-1)
// convention). When there are fewer descriptors than dimensions the
// eigenproblem is solved through the Gram matrix instead of the covariance.
WhiteningModel whiten_fit(const std::vector<PageDescriptor>& descriptors);

// transform + l2; a descriptor equal to the mean maps to the zero vector
// with a warning.
PageDescriptor whiten_apply(const WhiteningModel& model, const PageDescriptor& d);

// Document-by-document cosine matrix for leave-one-out retrieval, with the
// whitening model re-fit per query on the remaining documents. A single fit
// that includes the query degenerates whenever the corpus is smaller than
// the descriptor length: with all n-1 principal components kept, whitening
// maps any such descriptor set to a regular simplex — every pairwise cosine
// becomes exactly -1/(n-1) and ranking turns into noise. Refitting without
// the query keeps query-to-gallery geometry informative, and converges to
// the single fit once the corpus outgrows the descriptor length.
//
// Row q holds the similarities of query q against every document under the
// model fit without q; the diagonal is 1. The matrix is therefore not
// exactly symmetric. With fewer than 3 documents there is nothing to fit
// on, so plain cosines over the inputs are returned; the one-entry rankings
// of a 2-document corpus are unaffected by any choice of transform.
Eigen::MatrixXd leave_one_out_similarities(
    const std::vector<PageDescriptor>& powered, int jobs = 1);

// "doc_id,v0,v1,..." rows, full double precision.
void export_descriptors_csv(const std::vector<PageDescriptor>& descriptors,
                            const std::string& path);

// One single-record feature file per document (origin kind 2), named
// <doc_id>.wrfeat inside dir. Values are stored single-precision.
void export_descriptors_wrfeat(const std::vector<PageDescriptor>& descriptors,
                               const std::string& dir);

}  // namespace wr
