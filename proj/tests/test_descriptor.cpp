#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "oracles.hpp"
#include "wr/descriptor.hpp"
#include "wr/features.hpp"
#include "wr/rng.hpp"

using namespace wr;
namespace fs = std::filesystem;

namespace {

EncodedFeature enc(std::initializer_list<double> values) {
  EncodedFeature e;
  e.vector.resize(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (const double v : values) e.vector[i++] = v;
  return e;
}

PageDescriptor descriptor(const Eigen::VectorXd& v, DescriptorStage stage,
                          const std::string& doc_id = "d") {
  PageDescriptor d;
  d.doc_id = doc_id;
  d.vector = v;
  d.stage = stage;
  return d;
}

Eigen::VectorXd random_vec(Eigen::Index n, std::uint64_t seed) {
  Eigen::VectorXd v(n);
  Rng rng(seed);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

}  // namespace

TEST_SUITE("descriptor") {

TEST_CASE("aggregate sums unit encodings") {
  const EncodedFeature e = enc({1.0, -2.0, 3.5});
  const PageDescriptor one = aggregate({e}, "p_1");
  CHECK(one.doc_id == "p_1");
  CHECK(one.stage == DescriptorStage::raw);
  CHECK(one.vector[0] == 1.0);
  CHECK(one.vector[1] == -2.0);
  CHECK(one.vector[2] == 3.5);

  const PageDescriptor four = aggregate({e, e, e, e}, "p_1");
  CHECK(four.vector[0] == 4.0);
  CHECK(four.vector[1] == -8.0);
  CHECK(four.vector[2] == 14.0);

  CHECK_THROWS_AS(aggregate({}, "p_1"), EmptyPage);
  CHECK_THROWS_AS(aggregate({e, enc({1.0, 2.0})}, "p_1"), DimMismatch);
}

TEST_CASE("signed power hits the closed-form point exactly") {
  Eigen::VectorXd v(3);
  v << 32.0, -32.0, 0.0;
  const Eigen::VectorXd p = signed_power(v, 0.4);
  CHECK(p[0] == 4.0);
  CHECK(p[1] == -4.0);
  CHECK(p[2] == 0.0);
}

TEST_CASE("signed power is exactly odd") {
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::VectorXd v = random_vec(16, 900 + trial);
    const Eigen::VectorXd pos = signed_power(v, 0.4);
    const Eigen::VectorXd neg = signed_power(-v, 0.4);
    for (Eigen::Index i = 0; i < v.size(); ++i) REQUIRE(neg[i] == -pos[i]);
  }
}

TEST_CASE("power normalization fundamentals") {
  const PageDescriptor zero =
      power_normalize(descriptor(Eigen::VectorXd::Zero(5), DescriptorStage::raw));
  CHECK(zero.stage == DescriptorStage::power_normalized);
  for (Eigen::Index i = 0; i < 5; ++i) {
    CHECK(zero.vector[i] == 0.0);  // stays zero, never NaN
  }

  // alpha=1 keeps the direction: result is just the l2-normalized input.
  const Eigen::VectorXd v = random_vec(8, 77);
  const PageDescriptor unit =
      power_normalize(descriptor(v, DescriptorStage::raw), 1.0);
  const Eigen::VectorXd expect = v / v.norm();
  CHECK((unit.vector - expect).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(unit.vector.norm() - 1.0) < 1e-12);

  // Positive rescaling of the input is absorbed entirely.
  const PageDescriptor a = power_normalize(descriptor(v, DescriptorStage::raw));
  const PageDescriptor b =
      power_normalize(descriptor(3.0 * v, DescriptorStage::raw));
  CHECK((a.vector - b.vector).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("stage order is enforced") {
  const Eigen::VectorXd v = random_vec(4, 5);
  CHECK_THROWS_AS(
      power_normalize(descriptor(v, DescriptorStage::power_normalized)),
      ValidationError);
  CHECK_THROWS_AS(power_normalize(descriptor(v, DescriptorStage::whitened)),
                  ValidationError);

  const std::vector<PageDescriptor> raw{descriptor(v, DescriptorStage::raw),
                                        descriptor(2 * v, DescriptorStage::raw)};
  CHECK_THROWS_AS(whiten_fit(raw), ValidationError);

  std::vector<PageDescriptor> ok;
  for (int i = 0; i < 4; ++i)
    ok.push_back(descriptor(random_vec(4, 50 + i), DescriptorStage::power_normalized,
                            "d" + std::to_string(i)));
  const WhiteningModel model = whiten_fit(ok);
  CHECK_THROWS_AS(whiten_apply(model, descriptor(v, DescriptorStage::raw)),
                  ValidationError);
}

TEST_CASE("whitening recovers an axis-aligned construction") {
  // Four points (+-a, +-b): covariance diag(4, 1), so the whitening basis must
  // be the scaled identity up to row signs fixed by the deterministic rule.
  const double a = 2.0 * std::sqrt(0.75);
  const double b = std::sqrt(0.75);
  std::vector<PageDescriptor> ds;
  int n = 0;
  for (const double sx : {1.0, -1.0})
    for (const double sy : {1.0, -1.0}) {
      Eigen::VectorXd v(2);
      v << sx * a, sy * b;
      ds.push_back(descriptor(v, DescriptorStage::power_normalized,
                              "d" + std::to_string(n++)));
    }
  const WhiteningModel model = whiten_fit(ds);
  REQUIRE(model.output_dim() == 2);
  REQUIRE(model.input_dim() == 2);
  CHECK(std::abs(model.mean[0]) < 1e-12);
  CHECK(std::abs(model.mean[1]) < 1e-12);
  CHECK(model.basis(0, 0) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(std::abs(model.basis(0, 1)) < 1e-9);
  CHECK(std::abs(model.basis(1, 0)) < 1e-9);
  CHECK(model.basis(1, 1) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("whitened outputs have identity covariance and unit norm") {
  // Correlated 2-d cloud, embedded in 6 dims through a fixed linear map.
  Rng rng(31);
  Eigen::MatrixXd embed(6, 2);
  for (Eigen::Index i = 0; i < embed.size(); ++i)
    embed(i / 2, i % 2) = rng.normal();
  std::vector<PageDescriptor> ds;
  for (int i = 0; i < 200; ++i) {
    const double u = rng.normal();
    const double w = 0.8 * u + 0.6 * rng.normal();
    Eigen::VectorXd latent(2);
    latent << u, 3.0 * w;
    Eigen::VectorXd v = embed * latent + 0.01 * random_vec(6, 4000 + i);
    ds.push_back(descriptor(v, DescriptorStage::power_normalized,
                            "d" + std::to_string(i)));
  }
  const WhiteningModel model = whiten_fit(ds);
  REQUIRE(model.output_dim() >= 2);

  std::vector<Eigen::VectorXd> transformed;
  for (const auto& d : ds) transformed.push_back(model.transform(d.vector));
  const Eigen::MatrixXd cov = oracle::covariance_reference(transformed);
  const Eigen::MatrixXd eye =
      Eigen::MatrixXd::Identity(model.output_dim(), model.output_dim());
  CHECK((cov - eye).cwiseAbs().maxCoeff() < 1e-6);

  for (const auto& d : ds) {
    const PageDescriptor w = whiten_apply(model, d);
    CHECK(w.stage == DescriptorStage::whitened);
    REQUIRE(std::abs(w.vector.norm() - 1.0) < 1e-9);
  }
}

TEST_CASE("rank deficiency shrinks the output instead of failing") {
  // Three samples span at most a 2-d affine subspace of the 10-d space.
  std::vector<PageDescriptor> ds;
  for (int i = 0; i < 3; ++i)
    ds.push_back(descriptor(random_vec(10, 600 + i),
                            DescriptorStage::power_normalized,
                            "d" + std::to_string(i)));
  const WhiteningModel model = whiten_fit(ds);
  CHECK(model.input_dim() == 10);
  CHECK(model.output_dim() <= 2);
  CHECK(model.output_dim() >= 1);
  for (const auto& d : ds)
    CHECK(std::abs(whiten_apply(model, d).vector.norm() - 1.0) < 1e-9);
}

TEST_CASE("a descriptor equal to the mean whitens to zero") {
  Eigen::VectorXd lo(3), hi(3);
  lo << 0, 0, 0;
  hi << 2, 4, 6;
  const std::vector<PageDescriptor> ds{
      descriptor(lo, DescriptorStage::power_normalized, "lo"),
      descriptor(hi, DescriptorStage::power_normalized, "hi")};
  const WhiteningModel model = whiten_fit(ds);
  Eigen::VectorXd mid(3);
  mid << 1, 2, 3;
  const PageDescriptor w =
      whiten_apply(model, descriptor(mid, DescriptorStage::power_normalized));
  CHECK(w.stage == DescriptorStage::whitened);
  CHECK(w.vector.norm() == 0.0);
}

TEST_CASE("whitening input validation") {
  std::vector<PageDescriptor> one{
      descriptor(random_vec(4, 1), DescriptorStage::power_normalized)};
  CHECK_THROWS_AS(whiten_fit(one), TooFewDescriptors);
  CHECK_THROWS_AS(whiten_fit({}), TooFewDescriptors);

  std::vector<PageDescriptor> mixed{
      descriptor(random_vec(4, 2), DescriptorStage::power_normalized, "a"),
      descriptor(random_vec(5, 3), DescriptorStage::power_normalized, "b")};
  CHECK_THROWS_AS(whiten_fit(mixed), DimMismatch);

  std::vector<PageDescriptor> ok{
      descriptor(random_vec(4, 4), DescriptorStage::power_normalized, "a"),
      descriptor(random_vec(4, 5), DescriptorStage::power_normalized, "b"),
      descriptor(random_vec(4, 6), DescriptorStage::power_normalized, "c")};
  const WhiteningModel model = whiten_fit(ok);
  CHECK_THROWS_AS(model.transform(random_vec(7, 7)), DimMismatch);
  WhiteningModel blank;
  CHECK_THROWS_AS(blank.transform(random_vec(4, 8)), ValidationError);
}

TEST_CASE("whitening fit is deterministic") {
  std::vector<PageDescriptor> ds;
  for (int i = 0; i < 12; ++i)
    ds.push_back(descriptor(random_vec(7, 700 + i),
                            DescriptorStage::power_normalized,
                            "d" + std::to_string(i)));
  const WhiteningModel a = whiten_fit(ds);
  const WhiteningModel b = whiten_fit(ds);
  REQUIRE(a.basis.rows() == b.basis.rows());
  for (Eigen::Index r = 0; r < a.basis.rows(); ++r)
    for (Eigen::Index c = 0; c < a.basis.cols(); ++c)
      REQUIRE(a.basis(r, c) == b.basis(r, c));
}

TEST_CASE("csv export round-trips full precision") {
  const fs::path dir = fs::temp_directory_path() / "wr_descriptor_csv";
  fs::remove_all(dir);
  fs::create_directories(dir);

  std::vector<PageDescriptor> ds{
      descriptor(random_vec(3, 90), DescriptorStage::whitened, "alpha_1"),
      descriptor(random_vec(3, 91), DescriptorStage::whitened, "beta_2")};
  const std::string path = (dir / "descriptors.csv").string();
  export_descriptors_csv(ds, path);

  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    REQUIRE(row < ds.size());
    std::stringstream ss(line);
    std::string field;
    std::getline(ss, field, ',');
    CHECK(field == ds[row].doc_id);
    for (Eigen::Index i = 0; i < ds[row].vector.size(); ++i) {
      REQUIRE(std::getline(ss, field, ','));
      REQUIRE(std::stod(field) == ds[row].vector[i]);
    }
    CHECK_FALSE(std::getline(ss, field, ','));
    ++row;
  }
  CHECK(row == ds.size());
  fs::remove_all(dir);
}

TEST_CASE("a single whitening fit on a small corpus forces a regular simplex") {
  // With fewer documents than dimensions, a fit that keeps all n-1
  // components maps ANY descriptor set to a configuration where every
  // pairwise cosine is exactly -1/(n-1). This is the degeneracy
  // leave_one_out_similarities exists to avoid; keep it pinned.
  const int n = 8;
  std::vector<PageDescriptor> ds;
  for (int i = 0; i < n; ++i)
    ds.push_back(descriptor(random_vec(40, 2200 + i),
                            DescriptorStage::power_normalized,
                            "d" + std::to_string(i)));
  const WhiteningModel model = whiten_fit(ds);
  REQUIRE(model.output_dim() == n - 1);

  std::vector<Eigen::VectorXd> w;
  for (const auto& d : ds) w.push_back(whiten_apply(model, d).vector);
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      const double cos = w[static_cast<std::size_t>(a)].dot(w[static_cast<std::size_t>(b)]);
      CHECK(std::abs(cos - (-1.0 / (n - 1))) < 1e-9);
    }
}

TEST_CASE("leave-one-out refits keep rankings a single fit erases") {
  // Eight documents forming four near-duplicate pairs in a space wider than
  // the corpus. The simplex collapse above would pin every single-fit cosine
  // at -1/7, so no pair could surface; under per-query refits each document
  // must still retrieve its twin first.
  std::vector<PageDescriptor> ds;
  for (int i = 0; i < 8; ++i) {
    const Eigen::VectorXd base = random_vec(40, 31000 + i % 4);
    ds.push_back(descriptor(base + 0.02 * random_vec(40, 31100 + i),
                            DescriptorStage::power_normalized,
                            "d" + std::to_string(i)));
  }
  const Eigen::MatrixXd s = leave_one_out_similarities(ds);
  REQUIRE(s.rows() == 8);
  REQUIRE(s.cols() == 8);
  for (int q = 0; q < 8; ++q) {
    CHECK(s(q, q) == 1.0);
    const int twin = (q + 4) % 8;
    for (int j = 0; j < 8; ++j) {
      if (j == q || j == twin) continue;
      CHECK(s(q, twin) > s(q, j));
    }
  }

  // Thread count changes scheduling only, never a value.
  const Eigen::MatrixXd s4 = leave_one_out_similarities(ds, 4);
  REQUIRE((s - s4).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("leave-one-out similarities approach the single fit when oversampled") {
  // Dropping one of many samples barely moves the model, so both protocols
  // must agree up to a perturbation that shrinks with the sample count.
  std::vector<PageDescriptor> ds;
  for (int i = 0; i < 400; ++i) {
    Eigen::VectorXd v = random_vec(5, 52000 + i);
    v[0] *= 3.0;
    v[1] += 0.5 * v[0];
    ds.push_back(descriptor(v, DescriptorStage::power_normalized,
                            "d" + std::to_string(i)));
  }
  const Eigen::MatrixXd loo = leave_one_out_similarities(ds, 2);

  const WhiteningModel model = whiten_fit(ds);
  std::vector<Eigen::VectorXd> w;
  for (const auto& d : ds) w.push_back(whiten_apply(model, d).vector);
  double max_diff = 0.0;
  for (int a = 0; a < 400; ++a)
    for (int b = 0; b < 400; ++b) {
      if (a == b) continue;
      const double single = w[static_cast<std::size_t>(a)].dot(w[static_cast<std::size_t>(b)]);
      max_diff = std::max(max_diff, std::abs(single - loo(a, b)));
    }
  CHECK(max_diff < 0.06);
}

TEST_CASE("leave-one-out similarities edge cases") {
  CHECK_THROWS_AS(leave_one_out_similarities({}), TooFewDescriptors);

  std::vector<PageDescriptor> two{
      descriptor(random_vec(6, 61), DescriptorStage::power_normalized, "a"),
      descriptor(random_vec(6, 62), DescriptorStage::power_normalized, "b")};
  CHECK_THROWS_AS(leave_one_out_similarities(two, 0), InvalidParams);

  // Below three documents there is no held-out set to fit on; plain cosines
  // come back (the single possible ranking is the same either way).
  const Eigen::MatrixXd s = leave_one_out_similarities(two);
  const double expect = two[0].vector.dot(two[1].vector) /
                        (two[0].vector.norm() * two[1].vector.norm());
  CHECK(s(0, 0) == 1.0);
  CHECK(s(1, 1) == 1.0);
  CHECK(s(0, 1) == expect);
  CHECK(s(1, 0) == expect);
}

TEST_CASE("wrfeat export stores one kind-2 record per document") {
  const fs::path dir = fs::temp_directory_path() / "wr_descriptor_feat";
  fs::remove_all(dir);

  const Eigen::VectorXd v = random_vec(6, 95);
  export_descriptors_wrfeat({descriptor(v, DescriptorStage::whitened, "page_7")},
                            dir.string());
  const LocalFeatureSet set =
      import_features((dir / "page_7.wrfeat").string());
  REQUIRE(set.size() == 1);
  CHECK(set.dim == 6);
  CHECK(set.origins[0].kind == kOriginPageDescriptor);
  for (Eigen::Index i = 0; i < v.size(); ++i)
    CHECK(set.vectors(0, i) == static_cast<float>(v[i]));
  fs::remove_all(dir);
}

}  // TEST_SUITE
