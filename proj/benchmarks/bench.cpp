#include <benchmark/benchmark.h>

#include <Eigen/Core>

#include "wr/binarize.hpp"
#include "wr/descriptor.hpp"
#include "wr/encoding.hpp"
#include "wr/features.hpp"
#include "wr/log.hpp"
#include "wr/rng.hpp"
#include "wr/synth.hpp"

namespace {

Eigen::MatrixXf random_rows(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  wr::Rng rng(seed);
  Eigen::MatrixXf m(n, d);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < d; ++c)
      m(r, c) = static_cast<float>(rng.normal());
  return m;
}

wr::LocalFeatureSet feature_set(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  wr::LocalFeatureSet set;
  set.doc_id = "bench";
  set.dim = static_cast<int>(d);
  set.vectors = random_rows(n, d, seed);
  set.origins.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    set.origins[static_cast<std::size_t>(i)] = {static_cast<float>(i), 0.0f, 0};
  return set;
}

const wr::SynthPage& bench_page() {
  static const wr::SynthPage page = [] {
    wr::SynthParams params;
    params.page_width = 800;
    params.page_height = 560;
    params.lines_per_page = 7;
    const auto profiles = wr::make_writer_profiles(1, 12);
    return wr::render_page(profiles[0], params, 34);
  }();
  return page;
}

void BM_KMeansFit(benchmark::State& state) {
  const Eigen::MatrixXf rows = random_rows(2000, 128, 5);
  const int k = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(wr::kmeans_fit(rows, k, 7));
  }
}
BENCHMARK(BM_KMeansFit)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_VladEncode(benchmark::State& state) {
  const wr::LocalFeatureSet set = feature_set(512, 128, 6);
  wr::Codebook cb;
  cb.k = static_cast<int>(state.range(0));
  cb.dim = 128;
  cb.centers = random_rows(cb.k, 128, 7);
  cb.fitted = true;
  for (auto _ : state) {
    benchmark::DoNotOptimize(wr::vlad_encode(set, cb));
  }
}
BENCHMARK(BM_VladEncode)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_SoftAssignEncode(benchmark::State& state) {
  const wr::LocalFeatureSet set = feature_set(512, 128, 8);
  const wr::SoftAssignParams params =
      wr::random_soft_assign_params(static_cast<int>(state.range(0)), 128, 9);
  for (auto _ : state) {
    benchmark::DoNotOptimize(wr::soft_assign_encode(set, params));
  }
}
BENCHMARK(BM_SoftAssignEncode)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_GmpEncode(benchmark::State& state) {
  const wr::LocalFeatureSet set = feature_set(state.range(0), 128, 10);
  for (auto _ : state) {
    benchmark::DoNotOptimize(wr::gmp_encode(set, 1.0));
  }
}
BENCHMARK(BM_GmpEncode)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_BinarizeOtsu(benchmark::State& state) {
  const wr::GrayImage& page = bench_page().image;
  for (auto _ : state) {
    benchmark::DoNotOptimize(wr::binarize(page, wr::BinarizeMethod::otsu));
  }
}
BENCHMARK(BM_BinarizeOtsu)->Unit(benchmark::kMillisecond);

void BM_BinarizeSauvola(benchmark::State& state) {
  const wr::GrayImage& page = bench_page().image;
  for (auto _ : state) {
    benchmark::DoNotOptimize(wr::binarize(page, wr::BinarizeMethod::sauvola));
  }
}
BENCHMARK(BM_BinarizeSauvola)->Unit(benchmark::kMillisecond);

void BM_PatchFeatures(benchmark::State& state) {
  const wr::SynthPage& page = bench_page();
  for (auto _ : state) {
    benchmark::DoNotOptimize(wr::extract_patch_features(page.image, "bench"));
  }
}
BENCHMARK(BM_PatchFeatures)->Unit(benchmark::kMillisecond);

void BM_CharacterFeatures(benchmark::State& state) {
  const wr::SynthPage& page = bench_page();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        wr::extract_character_features(page.image, "bench", page.annotations));
  }
}
BENCHMARK(BM_CharacterFeatures)->Unit(benchmark::kMillisecond);

void BM_PowerNormalize(benchmark::State& state) {
  wr::Rng rng(11);
  wr::PageDescriptor d;
  d.doc_id = "bench";
  d.vector = Eigen::VectorXd(4096);
  for (Eigen::Index i = 0; i < d.vector.size(); ++i) d.vector[i] = rng.normal();
  for (auto _ : state) {
    benchmark::DoNotOptimize(wr::power_normalize(d, 0.4));
  }
}
BENCHMARK(BM_PowerNormalize)->Unit(benchmark::kMicrosecond);

}  // namespace

int main(int argc, char** argv) {
  wr::log::min_level() = wr::log::Level::quiet;
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
