// Simulate a short sequence, track it frame by frame and score the result.
//
//   track_synthetic [seed]

#include "pmbm/config.hpp"
#include "pmbm/eval.hpp"
#include "pmbm/filter.hpp"
#include "pmbm/pipeline.hpp"
#include "pmbm/sim.hpp"

#include <cstdio>
#include <cstdlib>
#include <vector>

int main(int argc, char** argv) {
    const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 1;

    // Default KITTI-like camera and models; three cars in view at the start.
    pmbm::Settings settings = pmbm::default_settings(pmbm::CameraModel{});
    const auto scenario = pmbm::seeded_scenario(settings, 3, 50, seed);
    const auto sim = pmbm::simulate(scenario);

    pmbm::Tracker tracker(settings.filter_model(), settings.filter);
    pmbm::io::PerFrame<pmbm::io::TrackFileRecord> tracks(sim.detections.size());
    std::vector<Eigen::VectorXd> z;

    for (std::size_t k = 0; k < sim.detections.size(); ++k) {
        z.clear();
        for (const auto& d : sim.detections[k]) z.push_back(pmbm::detection_to_measurement(d).to_vector());
        const auto estimates = tracker.step(z);

        for (const auto& e : estimates)
            tracks[k].push_back(pmbm::make_track_record(k, e.track_id, e.mean, e.existence, pmbm::ObjectClass::Car,
                                                        settings.camera));
        if (k % 10 == 9) {
            std::printf("frame %2zu: %zu detections, %zu tracks, %zu hypotheses\n", k, z.size(), estimates.size(),
                        tracker.density().hypotheses.size());
            for (const auto& e : estimates)
                std::printf("  id %3llu  x %6.2f  z %6.2f  vz %5.2f  r %.3f\n",
                            static_cast<unsigned long long>(e.track_id), e.mean(pmbm::idx::x), e.mean(pmbm::idx::z),
                            e.mean(pmbm::idx::vz), e.existence);
        }
    }

    const auto gt = pmbm::eval_frames(pmbm::truth_records(sim.truth, settings.camera), sim.detections.size());
    const auto est = pmbm::eval_frames(tracks, sim.detections.size());
    const auto m = pmbm::eval::clear_mot(gt, est, pmbm::eval::MatchCriterion::euclidean3d());
    std::printf("3D: MOTA %.1f%%  MOTP %.1f cm  IDS %zu  FRAG %zu  recall %.1f%%  precision %.1f%%\n", 100.0 * m.mota,
                m.motp, m.ids, m.frag, 100.0 * m.recall, 100.0 * m.precision);
    return 0;
}
