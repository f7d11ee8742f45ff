// pmbm_cli: track, simulate, evaluate and bench front end.
//
// Data goes to files or stdout; progress and errors go to stderr.

#include "pmbm/config.hpp"
#include "pmbm/errors.hpp"
#include "pmbm/eval.hpp"
#include "pmbm/io.hpp"
#include "pmbm/pipeline.hpp"
#include "pmbm/sim.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;

namespace {

bool g_quiet = false;

void log(const std::string& msg) {
    if (!g_quiet) std::cerr << "pmbm_cli: " << msg << '\n';
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

/// Runs f(0..n-1) on up to `jobs` threads. Results keep index order and the
/// first failure (by index) is rethrown.
template <class F>
auto parallel_map(std::size_t n, unsigned jobs, F f) {
    using R = decltype(f(std::size_t{0}));
    std::vector<std::optional<R>> out(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                out[i] = f(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const unsigned n_threads = static_cast<unsigned>(std::min<std::size_t>(std::max(jobs, 1u), std::max<std::size_t>(n, 1)));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    std::vector<R> result;
    result.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (errors[i]) std::rethrow_exception(errors[i]);
        result.push_back(std::move(*out[i]));
    }
    return result;
}

struct Common {
    std::string config;
    std::string calib;
    std::optional<std::uint64_t> seed;
};

pmbm::Settings load(const Common& c) {
    const pmbm::CameraModel cam = c.calib.empty() ? pmbm::CameraModel{} : pmbm::io::parse_calibration(c.calib);
    auto s = c.config.empty() ? pmbm::default_settings(cam) : pmbm::load_settings(c.config, cam);
    if (c.seed) s.seed = *c.seed;
    return s;
}

// ---------------------------------------------------------------------------
// track

struct TrackArgs {
    Common common;
    std::string detections;
    std::string poses;
    std::string out;
    bool kitti = false;
    std::size_t frames = 0;
};

int cmd_track(const TrackArgs& a) {
    const auto s = load(a.common);
    const auto detections = pmbm::io::parse_detections(a.detections, a.kitti, a.frames);
    std::optional<pmbm::io::PoseTrack> poses;
    if (!a.poses.empty()) poses = pmbm::io::parse_poses(a.poses);
    log("tracking " + std::to_string(detections.size()) + " frames from " + a.detections);

    const auto run = pmbm::run_tracking(detections, s.filter_model(), s.filter, s.camera, poses ? &*poses : nullptr);
    pmbm::io::write_tracks(a.out, run.tracks);

    std::size_t n_est = 0;
    for (const auto& f : run.tracks) n_est += f.size();
    log("wrote " + std::to_string(n_est) + " estimates to " + a.out);
    log("per-frame latency: mean " + fixed(run.mean_ms(), 3) + " ms, max " + fixed(run.max_ms(), 3) + " ms");
    return 0;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
    Common common;
    std::string out;
    std::optional<std::size_t> frames;
    std::size_t objects = 0;
};

int cmd_simulate(const SimulateArgs& a) {
    auto s = load(a.common);
    if (a.frames) s.n_frames = *a.frames;
    if (s.n_frames == 0) throw pmbm::InvalidArgument("n_frames must be positive");

    const auto scenario = pmbm::seeded_scenario(s, a.objects, s.n_frames, s.seed);
    const auto sim = pmbm::simulate(scenario);

    fs::create_directories(a.out);
    const fs::path dir(a.out);
    pmbm::io::write_tracks((dir / "ground_truth.csv").string(), pmbm::truth_records(sim.truth, s.camera));
    pmbm::io::write_detections((dir / "detections.csv").string(), sim.detections);
    {
        std::ofstream echo(dir / "config_echo.txt", std::ios::binary | std::ios::trunc);
        if (!echo) throw pmbm::IoError("cannot write config echo in '" + a.out + "'");
        pmbm::Settings echoed = s;
        echoed.initial_objects = scenario.initial_objects;
        pmbm::write_settings(echo, echoed);
    }
    {
        std::ofstream calib(dir / "calib.txt", std::ios::binary | std::ios::trunc);
        if (!calib) throw pmbm::IoError("cannot write calibration in '" + a.out + "'");
        pmbm::io::write_calibration(calib, s.camera);
    }

    std::size_t n_det = 0;
    for (const auto& f : sim.detections) n_det += f.size();
    log("simulated " + std::to_string(s.n_frames) + " frames, " + std::to_string(sim.truth.lifetimes.size()) +
        " objects, " + std::to_string(n_det) + " detections (seed " + std::to_string(s.seed) + ") into " + a.out);
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct Row {
    std::string sequence;
    std::string criterion;
    pmbm::eval::MotMetrics m;
};

void print_table(std::ostream& os, const std::vector<Row>& rows) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-16s %-4s %8s %8s %7s %7s %6s %6s %7s %7s %7s %7s\n", "sequence", "crit", "MOTA",
                  "MOTP", "MT", "ML", "IDS", "FRAG", "F1", "Pre", "Rec", "FAR");
    os << buf;
    for (const auto& r : rows) {
        const auto& m = r.m;
        // MOTP is an overlap in 2D (shown in percent) and centimeters in 3D.
        const double motp = r.criterion == "2d" ? 100.0 * m.motp : m.motp;
        std::snprintf(buf, sizeof(buf), "%-16s %-4s %7.2f%% %8.2f %6.2f%% %6.2f%% %6zu %6zu %6.2f%% %6.2f%% %6.2f%% %7.3f\n",
                      r.sequence.c_str(), r.criterion.c_str(), 100.0 * m.mota, motp, 100.0 * m.mt, 100.0 * m.ml, m.ids,
                      m.frag, 100.0 * m.f1, 100.0 * m.precision, 100.0 * m.recall, m.far);
        os << buf;
    }
}

constexpr const char* kMetricsHeader =
    "sequence,criterion,frames,gt,tp,fp,fn,ids,frag,trajectories,mt,ml,mota,motp,f1,precision,recall,far";

void write_metrics_row(std::ostream& os, const Row& r) {
    using pmbm::io::format_real;
    const auto& m = r.m;
    os << r.sequence << ',' << r.criterion << ',' << m.n_frames << ',' << m.n_gt << ',' << m.tp << ',' << m.fp << ','
       << m.fn << ',' << m.ids << ',' << m.frag << ',' << m.n_trajectories << ',' << format_real(m.mt) << ','
       << format_real(m.ml) << ',' << format_real(m.mota) << ',' << format_real(m.motp) << ',' << format_real(m.f1)
       << ',' << format_real(m.precision) << ',' << format_real(m.recall) << ',' << format_real(m.far) << '\n';
}

std::vector<std::string> criteria(const std::string& which) {
    if (which == "both") return {"2d", "3d"};
    return {which};
}

pmbm::eval::MatchCriterion match_criterion(const std::string& c) {
    return c == "2d" ? pmbm::eval::MatchCriterion::iou2d() : pmbm::eval::MatchCriterion::euclidean3d();
}

struct EvaluateArgs {
    std::vector<std::string> gt;
    std::vector<std::string> tracks;
    std::string criterion = "both";
    std::string out;
    bool kitti = false;
    std::size_t frames = 0;
    unsigned jobs = 1;
};

std::vector<pmbm::eval::MotMetrics> evaluate_sequence(const EvaluateArgs& a, std::size_t i,
                                                      const std::vector<std::string>& crits) {
    const auto& gt_path = a.gt[i];
    const auto& est_path = a.tracks[i];
    const auto gt_rec = a.kitti ? pmbm::io::parse_kitti_tracks(gt_path) : pmbm::io::parse_tracks(gt_path);
    const auto est_rec = a.kitti ? pmbm::io::parse_kitti_tracks(est_path) : pmbm::io::parse_tracks(est_path);

    // Sequence length comes from --frames or the ground truth. Estimates past
    // the end mean the two files do not describe the same sequence.
    const std::size_t n = a.frames > 0 ? a.frames : gt_rec.size();
    if (gt_rec.size() > n)
        throw pmbm::InvalidArgument(gt_path + ": ground truth has " + std::to_string(gt_rec.size()) +
                                    " frames, more than --frames " + std::to_string(n));
    if (est_rec.size() > n)
        throw pmbm::InvalidArgument("frame mismatch: " + est_path + " has estimates in frame " +
                                    std::to_string(est_rec.size() - 1) + " but the sequence has " + std::to_string(n) +
                                    " frames");
    const auto gt = pmbm::eval_frames(gt_rec, n);
    const auto est = pmbm::eval_frames(est_rec, n);
    std::vector<pmbm::eval::MotMetrics> out;
    for (const auto& c : crits) out.push_back(pmbm::eval::clear_mot(gt, est, match_criterion(c)));
    return out;
}

int cmd_evaluate(const EvaluateArgs& a) {
    if (a.gt.size() != a.tracks.size())
        throw pmbm::InvalidArgument("--gt and --tracks must be given the same number of times");
    const auto crits = criteria(a.criterion);
    const auto per_seq = parallel_map(a.gt.size(), a.jobs, [&](std::size_t i) { return evaluate_sequence(a, i, crits); });

    std::vector<Row> rows;
    for (std::size_t i = 0; i < a.gt.size(); ++i)
        for (std::size_t c = 0; c < crits.size(); ++c)
            rows.push_back({fs::path(a.tracks[i]).stem().string(), crits[c], per_seq[i][c]});
    if (a.gt.size() > 1) {
        for (std::size_t c = 0; c < crits.size(); ++c) {
            std::vector<pmbm::eval::MotMetrics> parts;
            for (const auto& s : per_seq) parts.push_back(s[c]);
            rows.push_back({"aggregate", crits[c], pmbm::eval::aggregate(parts)});
        }
    }

    print_table(std::cout, rows);
    if (!a.out.empty()) {
        std::ofstream os(a.out, std::ios::binary | std::ios::trunc);
        if (!os) throw pmbm::IoError("cannot open '" + a.out + "' for writing");
        os << kMetricsHeader << '\n';
        for (const auto& r : rows) write_metrics_row(os, r);
        if (!os) throw pmbm::IoError("write to '" + a.out + "' failed");
        log("wrote metrics to " + a.out);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
    Common common;
    std::string out;
    std::vector<double> p_detect{0.7, 0.8, 0.9, 0.95};
    std::vector<double> clutter{0.0, 2.0, 5.0, 10.0};
    std::size_t seeds = 3;
    std::size_t frames = 100;
    std::size_t objects = 5;
    unsigned jobs = 1;
};

constexpr const char* kBenchHeader =
    "p_detect,clutter_rate,seed,mota_2d,motp_2d,ids_2d,frag_2d,mota_3d,motp_3d,ids_3d,frag_3d,mean_ms,max_ms";

int cmd_bench(const BenchArgs& a) {
    const auto base = load(a.common);
    if (a.frames == 0) throw pmbm::InvalidArgument("--frames must be positive");
    for (double p : a.p_detect)
        if (!(p > 0.0 && p <= 1.0)) throw pmbm::InvalidArgument("p_detect values must lie in (0, 1]");
    for (double l : a.clutter)
        if (!(l >= 0.0)) throw pmbm::InvalidArgument("clutter rates must be non-negative");

    struct Job {
        double p_detect, clutter;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (double p : a.p_detect)
        for (double l : a.clutter)
            for (std::size_t k = 0; k < a.seeds; ++k) jobs.push_back({p, l, base.seed + k});
    log("bench: " + std::to_string(jobs.size()) + " sequences of " + std::to_string(a.frames) + " frames");
    if (a.jobs > 1) log("bench: latency figures are not single-threaded with --jobs " + std::to_string(a.jobs));

    const auto rows = parallel_map(jobs.size(), a.jobs, [&](std::size_t i) {
        auto s = base;
        s.params.p_detect = jobs[i].p_detect;
        s.params.clutter_rate = jobs[i].clutter;
        return pmbm::run_bench(s, a.objects, a.frames, jobs[i].seed);
    });

    std::ofstream file;
    if (!a.out.empty()) {
        file.open(a.out, std::ios::binary | std::ios::trunc);
        if (!file) throw pmbm::IoError("cannot open '" + a.out + "' for writing");
    }
    std::ostream& csv = a.out.empty() ? std::cout : file;
    using pmbm::io::format_real;
    csv << kBenchHeader << '\n';
    for (const auto& r : rows)
        csv << format_real(r.p_detect) << ',' << format_real(r.clutter_rate) << ',' << r.seed << ','
            << format_real(r.metrics_2d.mota) << ',' << format_real(r.metrics_2d.motp) << ',' << r.metrics_2d.ids << ','
            << r.metrics_2d.frag << ',' << format_real(r.metrics_3d.mota) << ',' << format_real(r.metrics_3d.motp)
            << ',' << r.metrics_3d.ids << ',' << r.metrics_3d.frag << ',' << format_real(r.mean_ms) << ','
            << format_real(r.max_ms) << '\n';
    if (!csv) throw pmbm::IoError("bench: write failed");

    // Pooled summary per (p_D, lambda) cell, only when the CSV went to a file.
    if (!a.out.empty()) {
        std::vector<Row> summary;
        for (std::size_t i = 0; i < rows.size(); i += std::max<std::size_t>(a.seeds, 1)) {
            std::vector<pmbm::eval::MotMetrics> p2, p3;
            for (std::size_t k = 0; k < a.seeds; ++k) {
                p2.push_back(rows[i + k].metrics_2d);
                p3.push_back(rows[i + k].metrics_3d);
            }
            const std::string name = "pD=" + fixed(rows[i].p_detect, 2) + " l=" + fixed(rows[i].clutter_rate, 1);
            summary.push_back({name, "2d", pmbm::eval::aggregate(p2)});
            summary.push_back({name, "3d", pmbm::eval::aggregate(p3)});
        }
        print_table(std::cout, summary);
        double mean = 0.0, worst = 0.0;
        for (const auto& r : rows) {
            mean += r.mean_ms;
            worst = std::max(worst, r.max_ms);
        }
        if (!rows.empty()) mean /= static_cast<double>(rows.size());
        log("bench: per-frame latency mean " + fixed(mean, 3) + " ms, max " + fixed(worst, 3) + " ms");
        log("wrote " + a.out);
    }
    return 0;
}

void add_common(CLI::App* cmd, Common& c, bool with_seed) {
    cmd->add_option("--config", c.config, "settings file (key=value)")->check(CLI::ExistingFile);
    cmd->add_option("--calib", c.calib, "camera calibration file (key=value)")->check(CLI::ExistingFile);
    if (with_seed) cmd->add_option("--seed", c.seed, "random seed (overrides the config)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PMBM multi-object tracker for camera detections"};
    app.require_subcommand(1);
    app.fallthrough();
    app.add_flag("-q,--quiet", g_quiet, "suppress progress messages");

    TrackArgs track;
    auto* t = app.add_subcommand("track", "run the filter over a detections file");
    add_common(t, track.common, false);
    t->add_option("--detections", track.detections, "detections CSV (or KITTI labels with --kitti-format)")
        ->required()
        ->check(CLI::ExistingFile);
    t->add_option("--poses", track.poses, "camera-to-world poses CSV; output is then in world frame")
        ->check(CLI::ExistingFile);
    t->add_option("--out", track.out, "tracks CSV to write")->required();
    t->add_flag("--kitti-format", track.kitti, "read detections in KITTI label format");
    t->add_option("--frames", track.frames, "minimum sequence length (pads trailing empty frames)");

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "generate a synthetic sequence");
    add_common(s, sim.common, true);
    s->add_option("--out", sim.out, "output directory")->required();
    s->add_option("--frames", sim.frames, "number of frames (overrides the config)");
    s->add_option("--objects", sim.objects, "extra objects placed at random in the first frame");

    EvaluateArgs ev;
    auto* e = app.add_subcommand("evaluate", "CLEAR-MOT metrics of tracks against ground truth");
    e->add_option("--gt", ev.gt, "ground truth tracks file (repeat per sequence)")->required()->check(CLI::ExistingFile);
    e->add_option("--tracks", ev.tracks, "estimated tracks file (repeat per sequence)")
        ->required()
        ->check(CLI::ExistingFile);
    e->add_option("--criterion", ev.criterion, "2d (IoU 0.5), 3d (3 m) or both")
        ->check(CLI::IsMember({"2d", "3d", "both"}));
    e->add_option("--out", ev.out, "metrics CSV to write");
    e->add_flag("--kitti-format", ev.kitti, "both files are KITTI tracking labels");
    e->add_option("--frames", ev.frames, "sequence length (default: from the ground truth)");
    e->add_option("--jobs", ev.jobs, "worker threads")->check(CLI::Range(1u, 256u));

    BenchArgs bench;
    auto* b = app.add_subcommand("bench", "simulate, track and evaluate over a p_D x clutter grid");
    add_common(b, bench.common, true);
    b->add_option("--out", bench.out, "results CSV (default: stdout)");
    b->add_option("--p-detect", bench.p_detect, "detection probabilities")->delimiter(',');
    b->add_option("--clutter", bench.clutter, "clutter rates")->delimiter(',');
    b->add_option("--seeds", bench.seeds, "sequences per grid cell")->check(CLI::PositiveNumber);
    b->add_option("--frames", bench.frames, "frames per sequence");
    b->add_option("--objects", bench.objects, "initial objects per sequence");
    b->add_option("--jobs", bench.jobs, "worker threads")->check(CLI::Range(1u, 256u));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err);
    }

    try {
        if (*t) return cmd_track(track);
        if (*s) return cmd_simulate(sim);
        if (*e) return cmd_evaluate(ev);
        if (*b) return cmd_bench(bench);
    } catch (const pmbm::Error& err) {
        std::cerr << "pmbm_cli: error: " << err.what() << '\n';
        return 1;
    } catch (const std::exception& err) {
        std::cerr << "pmbm_cli: unexpected error: " << err.what() << '\n';
        return 2;
    }
    return 1;
}
