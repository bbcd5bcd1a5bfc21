#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "microtrap/dynamics.hpp"
#include "microtrap/imaging.hpp"
#include "microtrap/optics.hpp"
#include "microtrap/trap_field.hpp"

using namespace microtrap;

namespace {

std::shared_ptr<const TrapField> row_field(int cols) {
    const auto geometry = LensArrayGeometry::fully_illuminated(1, cols, 125e-6, 625e-6);
    IlluminationBeam beam;
    beam.total_power = 3e-3 * cols;
    beam.wavelength = 780.64e-9;
    beam.focus_waist = 7e-6;
    return std::make_shared<const TrapField>(expand_foci(geometry, beam), rubidium85());
}

void BM_PotentialGradient(benchmark::State& state) {
    const auto field = row_field(static_cast<int>(state.range(0)));
    const Vec3 p(3e-6, -2e-6, 10e-6);
    Vec3 g;
    for (auto _ : state) benchmark::DoNotOptimize(field->potential_gradient(p, g));
}
BENCHMARK(BM_PotentialGradient)->Arg(8)->Arg(80);

void BM_EvolveStep(benchmark::State& state) {
    const auto field = row_field(8);
    Ensemble e = sample_loading(field, static_cast<std::size_t>(state.range(0)), 20e-6, 1);
    const double dt = default_dt(*field, 40.0);
    EvolveOptions options;
    options.threads = 1;
    for (auto _ : state) e = evolve(e, dt, dt, 0.0, options);
    state.SetItemsProcessed(state.iterations() * static_cast<long>(e.atoms.size()));
}
BENCHMARK(BM_EvolveStep)->Arg(125)->Arg(1250);

void BM_RenderAndDetect(benchmark::State& state) {
    std::vector<SpotSource> spots;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 20; ++c) spots.push_back({c * 125e-6, r * 125e-6, 500.0});
    const auto frame = frame_around(spots, 4e-6, 120e-6);
    RenderSettings rs;
    rs.photons_per_signal = 100.0;
    DetectionSettings ds;
    for (auto _ : state) {
        const auto image = render(spots, frame, rs);
        benchmark::DoNotOptimize(detect_sites(image, ds));
    }
}
BENCHMARK(BM_RenderAndDetect)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
