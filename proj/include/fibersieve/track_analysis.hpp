#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "constants.hpp"
#include "errors.hpp"
#include "numerics.hpp"
#include "transport.hpp"

namespace fibersieve {

struct Peak {
    std::size_t frame = 0;
    double pixel = 0.0;
    double intensity = 0.0;
};

struct PeakSet {
    std::vector<Peak> peaks;  ///< sorted by frame, then pixel
    std::size_t frames = 0;
    std::size_t pixels = 0;
    double pixel_pitch_um = 0.5;
    double frame_period_s = 0.05;
    double origin_um = 0.0;
};

struct PeakOptions {
    double prominence_factor = 3.0;  ///< minimum prominence in units of the row noise RMS
    double height_factor = 5.0;      ///< minimum height above the row median, in noise RMS
    std::size_t min_separation = 3;  ///< pixels
    double min_noise_rms = 1e-9;     ///< floor for noiseless rows
};

namespace detail {

inline double median_of(std::vector<double> v) {
    if (v.empty()) {
        return 0.0;
    }
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    double m = *mid;
    if (v.size() % 2 == 0) {
        m = 0.5 * (m + *std::max_element(v.begin(), mid));
    }
    return m;
}

/// Robust background level and noise RMS (median absolute deviation).
inline std::pair<double, double> row_background(std::span<const double> row) {
    std::vector<double> v(row.begin(), row.end());
    const double med = median_of(v);
    for (auto& x : v) {
        x = std::abs(x - med);
    }
    return {med, 1.4826 * median_of(std::move(v))};
}

inline double prominence(std::span<const double> x, std::size_t peak) {
    const double h = x[peak];
    double left_min = h;
    for (std::size_t i = peak; i-- > 0;) {
        if (x[i] > h) {
            break;
        }
        left_min = std::min(left_min, x[i]);
    }
    double right_min = h;
    for (std::size_t i = peak + 1; i < x.size(); ++i) {
        if (x[i] > h) {
            break;
        }
        right_min = std::min(right_min, x[i]);
    }
    return h - std::max(left_min, right_min);
}

}  // namespace detail

/// Local maxima of one row, filtered by height, then separation (taller peaks win), then
/// prominence. Flat tops report their middle sample.
inline std::vector<std::size_t> find_row_peaks(std::span<const double> x, double min_height,
                                               std::size_t min_separation, double min_prominence) {
    std::vector<std::size_t> cand;
    std::size_t i = 1;
    while (i + 1 < x.size()) {
        if (x[i] > x[i - 1]) {
            std::size_t j = i;
            while (j + 1 < x.size() && x[j + 1] == x[i]) {
                ++j;
            }
            if (j + 1 < x.size() && x[j + 1] < x[i]) {
                cand.push_back((i + j) / 2);
            }
            i = j + 1;
        } else {
            ++i;
        }
    }
    std::erase_if(cand, [&](std::size_t p) { return x[p] < min_height; });

    if (min_separation > 1 && cand.size() > 1) {
        std::vector<std::size_t> order(cand.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return x[cand[a]] > x[cand[b]]; });
        std::vector<bool> keep(cand.size(), true);
        for (std::size_t k : order) {
            if (!keep[k]) {
                continue;
            }
            for (std::size_t o = 0; o < cand.size(); ++o) {
                if (o != k && keep[o]) {
                    const auto gap = cand[o] > cand[k] ? cand[o] - cand[k] : cand[k] - cand[o];
                    if (gap < min_separation) {
                        keep[o] = false;
                    }
                }
            }
        }
        std::vector<std::size_t> kept;
        for (std::size_t k = 0; k < cand.size(); ++k) {
            if (keep[k]) {
                kept.push_back(cand[k]);
            }
        }
        cand = std::move(kept);
    }
    std::erase_if(cand, [&](std::size_t p) { return detail::prominence(x, p) < min_prominence; });
    return cand;
}

inline PeakSet extract_peaks(const Kymograph& k, const PeakOptions& opts = {}, unsigned workers = 0) {
    if (k.frames == 0 || k.pixels == 0) {
        throw ConfigError("extract_peaks: empty kymograph");
    }
    PeakSet out;
    out.frames = k.frames;
    out.pixels = k.pixels;
    out.pixel_pitch_um = k.pixel_pitch_um;
    out.frame_period_s = k.frame_period_s;
    out.origin_um = k.origin_um;
    std::vector<std::vector<Peak>> rows(k.frames);
    parallel_for(
        k.frames,
        [&](std::size_t f) {
            const auto row = k.row(f);
            const auto [median, rms0] = detail::row_background(row);
            const double rms = std::max(rms0, opts.min_noise_rms);
            for (std::size_t p : find_row_peaks(row, median + opts.height_factor * rms,
                                                opts.min_separation, opts.prominence_factor * rms)) {
                rows[f].push_back({f, static_cast<double>(p), row[p]});
            }
        },
        workers);
    for (auto& r : rows) {
        out.peaks.insert(out.peaks.end(), r.begin(), r.end());
    }
    return out;
}

struct HoughLine {
    double rho = 0.0;
    double theta_deg = 0.0;
    int votes = 0;
    double origin_frame = 0.0;  ///< rho is measured from this (frame, pixel) point
    double origin_pixel = 0.0;

    /// Pixel where the line meets the given frame; NaN for a vertical line.
    double pixel_at(double frame) const {
        const double t = theta_deg * constants::pi / 180.0;
        const double s = std::sin(t);
        if (s == 0.0) {
            return std::numeric_limits<double>::quiet_NaN();
        }
        return origin_pixel + (rho - (frame - origin_frame) * std::cos(t)) / s;
    }

    /// Slope of the line in pixels per frame; infinite for a vertical line.
    double slope_px_per_frame() const {
        const double t = theta_deg * constants::pi / 180.0;
        return -std::cos(t) / std::sin(t);
    }
};

/// Votes of peaks (l, m) for lines rho = (l - l0) cos(theta) + (m - m0) sin(theta), where (l0, m0)
/// is the centre of the peaks' bounding box. Centring keeps the vote ridge of a long line narrow
/// in rho, so neighbouring theta bins of one line fall inside the suppression window. Frames run along the
/// horizontal axis and pixels along the vertical one, so a stationary track has theta = 90 deg.
struct HoughSpectrum {
    std::size_t n_theta = 0;
    std::size_t n_rho = 0;
    double theta_step_deg = 1.0;
    double rho_step = 1.0;
    double rho_min = 0.0;
    double origin_frame = 0.0;
    double origin_pixel = 0.0;
    std::vector<int> votes;  ///< [theta][rho]
    HoughLine dominant;

    int at(std::size_t t, std::size_t r) const { return votes[t * n_rho + r]; }
    double theta_deg(std::size_t t) const { return theta_step_deg * static_cast<double>(t); }
    double rho(std::size_t r) const { return rho_min + rho_step * static_cast<double>(r); }
};

struct HoughOptions {
    double theta_step_deg = 1.0;
    double rho_step = 1.0;
};

namespace detail {

/// Orders accumulator cells: more votes first, then theta nearer 90 deg, then smaller rho.
inline bool better_cell(const HoughSpectrum& h, std::size_t a, std::size_t b) {
    if (h.votes[a] != h.votes[b]) {
        return h.votes[a] > h.votes[b];
    }
    const double da = std::abs(h.theta_deg(a / h.n_rho) - 90.0);
    const double db = std::abs(h.theta_deg(b / h.n_rho) - 90.0);
    if (da != db) {
        return da < db;
    }
    return a < b;
}

inline HoughLine line_of(const HoughSpectrum& h, std::size_t cell) {
    return {h.rho(cell % h.n_rho), h.theta_deg(cell / h.n_rho), h.votes[cell], h.origin_frame, h.origin_pixel};
}

}  // namespace detail

inline HoughSpectrum hough(std::span<const Peak> peaks, const HoughOptions& opts = {},
                           unsigned workers = 0) {
    if (peaks.size() < 2) {
        throw NumericError("hough: at least two peaks are needed for a spectrum");
    }
    if (!(opts.theta_step_deg > 0.0) || !(opts.rho_step > 0.0)) {
        throw ConfigError("hough: resolutions must be positive");
    }
    HoughSpectrum h;
    h.theta_step_deg = opts.theta_step_deg;
    h.rho_step = opts.rho_step;
    h.n_theta = static_cast<std::size_t>(std::llround(180.0 / opts.theta_step_deg));
    auto [lo_f, hi_f] = std::minmax_element(peaks.begin(), peaks.end(),
                                            [](const Peak& a, const Peak& b) { return a.frame < b.frame; });
    auto [lo_m, hi_m] = std::minmax_element(peaks.begin(), peaks.end(),
                                            [](const Peak& a, const Peak& b) { return a.pixel < b.pixel; });
    h.origin_frame = 0.5 * static_cast<double>(lo_f->frame + hi_f->frame);
    h.origin_pixel = 0.5 * (lo_m->pixel + hi_m->pixel);
    double extent = 0.0;
    for (const auto& p : peaks) {
        extent = std::max(extent, std::hypot(static_cast<double>(p.frame) - h.origin_frame, p.pixel - h.origin_pixel));
    }
    const auto half = static_cast<long long>(std::ceil(extent / opts.rho_step)) + 1;
    h.rho_min = -static_cast<double>(half) * opts.rho_step;
    h.n_rho = static_cast<std::size_t>(2 * half + 1);
    h.votes.assign(h.n_theta * h.n_rho, 0);

    std::vector<double> c(h.n_theta);
    std::vector<double> s(h.n_theta);
    for (std::size_t t = 0; t < h.n_theta; ++t) {
        const double a = h.theta_deg(t) * constants::pi / 180.0;
        c[t] = std::cos(a);
        s[t] = std::sin(a);
    }
    // Each theta row is owned by one worker, so no merging is needed.
    parallel_for(
        h.n_theta,
        [&](std::size_t t) {
            int* row = h.votes.data() + t * h.n_rho;
            for (const auto& p : peaks) {
                const double rho =
                    (static_cast<double>(p.frame) - h.origin_frame) * c[t] + (p.pixel - h.origin_pixel) * s[t];
                const auto r = static_cast<long long>(std::llround((rho - h.rho_min) / h.rho_step));
                ++row[r];
            }
        },
        workers);

    std::size_t best = 0;
    for (std::size_t i = 1; i < h.votes.size(); ++i) {
        if (detail::better_cell(h, i, best)) {
            best = i;
        }
    }
    h.dominant = detail::line_of(h, best);
    return h;
}

inline HoughSpectrum hough(const PeakSet& peaks, const HoughOptions& opts = {}, unsigned workers = 0) {
    return hough(std::span<const Peak>(peaks.peaks), opts, workers);
}

struct DominantLines {
    std::vector<HoughLine> lines;
    bool fewer_than_requested = false;
};

/// Top-k accumulator maxima with non-maximum suppression over a (2w+1) x (2w+1) window.
inline DominantLines dominant_lines(const HoughSpectrum& h, std::size_t k, std::size_t window = 2,
                                    int min_votes = 2) {
    DominantLines out;
    std::vector<std::size_t> cells;
    for (std::size_t i = 0; i < h.votes.size(); ++i) {
        if (h.votes[i] >= min_votes) {
            cells.push_back(i);
        }
    }
    std::sort(cells.begin(), cells.end(),
              [&](std::size_t a, std::size_t b) { return detail::better_cell(h, a, b); });
    auto near = [&](std::size_t a, std::size_t b) {
        const auto ta = static_cast<long long>(a / h.n_rho), tb = static_cast<long long>(b / h.n_rho);
        const auto ra = static_cast<long long>(a % h.n_rho), rb = static_cast<long long>(b % h.n_rho);
        const auto w = static_cast<long long>(window);
        return std::llabs(ta - tb) <= w && std::llabs(ra - rb) <= w;
    };
    std::vector<std::size_t> taken;
    for (std::size_t cell : cells) {
        if (taken.size() == k) {
            break;
        }
        if (std::any_of(taken.begin(), taken.end(), [&](std::size_t t) { return near(t, cell); })) {
            continue;
        }
        taken.push_back(cell);
        out.lines.push_back(detail::line_of(h, cell));
    }
    out.fewer_than_requested = out.lines.size() < k;
    return out;
}

/// Top-k lines picked one at a time: after each pick the peaks lying within `window` rho bins of
/// it withdraw their votes, then the next maximum outside the suppression window is taken. A long
/// line whose votes straddle two theta bins then yields one line instead of two.
inline DominantLines dominant_lines(const HoughSpectrum& h, std::span<const Peak> peaks, std::size_t k,
                                    std::size_t window = 2, int min_votes = 2) {
    DominantLines out;
    HoughSpectrum work = h;
    std::vector<double> c(h.n_theta);
    std::vector<double> s(h.n_theta);
    for (std::size_t t = 0; t < h.n_theta; ++t) {
        const double a = h.theta_deg(t) * constants::pi / 180.0;
        c[t] = std::cos(a);
        s[t] = std::sin(a);
    }
    auto rho_of = [&](const Peak& p, std::size_t t) {
        return (static_cast<double>(p.frame) - h.origin_frame) * c[t] + (p.pixel - h.origin_pixel) * s[t];
    };
    std::vector<bool> explained(peaks.size(), false);
    std::vector<std::size_t> taken;
    const auto w = static_cast<long long>(window);
    while (out.lines.size() < k) {
        std::optional<std::size_t> best;
        for (std::size_t i = 0; i < work.votes.size(); ++i) {
            if (work.votes[i] < min_votes || (best && !detail::better_cell(work, i, *best))) {
                continue;
            }
            const bool near = std::any_of(taken.begin(), taken.end(), [&](std::size_t t) {
                const auto dt = static_cast<long long>(t / h.n_rho) - static_cast<long long>(i / h.n_rho);
                const auto dr = static_cast<long long>(t % h.n_rho) - static_cast<long long>(i % h.n_rho);
                return std::llabs(dt) <= w && std::llabs(dr) <= w;
            });
            if (!near) {
                best = i;
            }
        }
        if (!best) {
            break;
        }
        taken.push_back(*best);
        out.lines.push_back(detail::line_of(work, *best));
        const std::size_t bt = *best / h.n_rho;
        const double rho = h.rho(*best % h.n_rho);
        for (std::size_t j = 0; j < peaks.size(); ++j) {
            if (explained[j] || std::abs(rho_of(peaks[j], bt) - rho) > static_cast<double>(window) * h.rho_step) {
                continue;
            }
            explained[j] = true;
            for (std::size_t t = 0; t < h.n_theta; ++t) {
                const auto r = std::llround((rho_of(peaks[j], t) - h.rho_min) / h.rho_step);
                --work.votes[t * h.n_rho + static_cast<std::size_t>(r)];
            }
        }
    }
    out.fewer_than_requested = out.lines.size() < k;
    return out;
}

struct Trajectory {
    std::vector<Peak> peaks;
    double mean_velocity_um_s = 0.0;  ///< least-squares slope of z(t)
    double velocity_std_um_s = 0.0;   ///< spread of step-to-step velocities
    double duration_s = 0.0;
    bool stuck = false;
};

struct LinkOptions {
    std::size_t max_gap_frames = 2;
    double max_jump_pixels = 80.0;
    std::size_t min_length = 5;
    // Stuck flag: position and relative intensity spread below these over at least min_frames.
    std::size_t stuck_min_frames = 100;
    double stuck_position_std_px = 0.25;
    double stuck_intensity_cv = 0.1;
};

namespace detail {

inline void fill_velocity(Trajectory& t, double pitch_um, double period_s) {
    const std::size_t n = t.peaks.size();
    t.duration_s = static_cast<double>(t.peaks.back().frame - t.peaks.front().frame) * period_s;
    if (n < 2) {
        return;
    }
    double ml = 0.0, mm = 0.0;
    for (const auto& p : t.peaks) {
        ml += static_cast<double>(p.frame);
        mm += p.pixel;
    }
    ml /= static_cast<double>(n);
    mm /= static_cast<double>(n);
    double sll = 0.0, slm = 0.0;
    for (const auto& p : t.peaks) {
        const double dl = static_cast<double>(p.frame) - ml;
        sll += dl * dl;
        slm += dl * (p.pixel - mm);
    }
    t.mean_velocity_um_s = slm / sll * pitch_um / period_s;
    std::vector<double> steps;
    for (std::size_t i = 1; i < n; ++i) {
        const double dl = static_cast<double>(t.peaks[i].frame - t.peaks[i - 1].frame);
        steps.push_back((t.peaks[i].pixel - t.peaks[i - 1].pixel) / dl * pitch_um / period_s);
    }
    if (steps.size() > 1) {
        const double mean = std::accumulate(steps.begin(), steps.end(), 0.0) / static_cast<double>(steps.size());
        double ss = 0.0;
        for (double v : steps) {
            ss += (v - mean) * (v - mean);
        }
        t.velocity_std_um_s = std::sqrt(ss / static_cast<double>(steps.size() - 1));
    }
}

inline bool looks_stuck(const Trajectory& t, const LinkOptions& o) {
    if (t.peaks.size() < o.stuck_min_frames) {
        return false;
    }
    double mp = 0.0, mi = 0.0;
    for (const auto& p : t.peaks) {
        mp += p.pixel;
        mi += p.intensity;
    }
    const auto n = static_cast<double>(t.peaks.size());
    mp /= n;
    mi /= n;
    double vp = 0.0, vi = 0.0;
    for (const auto& p : t.peaks) {
        vp += (p.pixel - mp) * (p.pixel - mp);
        vi += (p.intensity - mi) * (p.intensity - mi);
    }
    return std::sqrt(vp / n) <= o.stuck_position_std_px && mi > 0.0 && std::sqrt(vi / n) / mi <= o.stuck_intensity_cv;
}

}  // namespace detail

/// Greedy frame-by-frame linking. Each open track predicts its next pixel from its last
/// velocity; candidate links within the jump gate are taken in order of distance to that
/// prediction, ties going to the smaller change of velocity.
inline std::vector<Trajectory> link_trajectories(const PeakSet& set, const LinkOptions& opts = {}) {
    struct Open {
        std::vector<Peak> peaks;
        double velocity = 0.0;  ///< px per frame
    };
    std::vector<Open> open;
    std::vector<Trajectory> done;
    auto close = [&](Open&& o) {
        if (o.peaks.size() >= opts.min_length) {
            Trajectory t;
            t.peaks = std::move(o.peaks);
            detail::fill_velocity(t, set.pixel_pitch_um, set.frame_period_s);
            t.stuck = detail::looks_stuck(t, opts);
            done.push_back(std::move(t));
        }
    };

    std::size_t i = 0;
    const auto& peaks = set.peaks;
    while (i < peaks.size()) {
        const std::size_t frame = peaks[i].frame;
        std::size_t end = i;
        while (end < peaks.size() && peaks[end].frame == frame) {
            ++end;
        }
        // Retire tracks that can no longer be continued.
        for (std::size_t o = 0; o < open.size();) {
            if (frame - open[o].peaks.back().frame > opts.max_gap_frames + 1) {
                close(std::move(open[o]));
                open.erase(open.begin() + static_cast<std::ptrdiff_t>(o));
            } else {
                ++o;
            }
        }
        struct Candidate {
            double cost;
            double dv;
            std::size_t track;
            std::size_t peak;
        };
        std::vector<Candidate> cand;
        for (std::size_t o = 0; o < open.size(); ++o) {
            const auto& last = open[o].peaks.back();
            const auto gap = static_cast<double>(frame - last.frame);
            const double predicted = last.pixel + open[o].velocity * gap;
            for (std::size_t p = i; p < end; ++p) {
                if (std::abs(peaks[p].pixel - last.pixel) > opts.max_jump_pixels) {
                    continue;
                }
                const double v = (peaks[p].pixel - last.pixel) / gap;
                const double dv = open[o].peaks.size() > 1 ? std::abs(v - open[o].velocity) : 0.0;
                cand.push_back({std::abs(peaks[p].pixel - predicted), dv, o, p});
            }
        }
        std::sort(cand.begin(), cand.end(), [](const Candidate& a, const Candidate& b) {
            if (a.cost != b.cost) {
                return a.cost < b.cost;
            }
            if (a.dv != b.dv) {
                return a.dv < b.dv;
            }
            return a.track != b.track ? a.track < b.track : a.peak < b.peak;
        });
        std::vector<bool> track_used(open.size(), false);
        std::vector<bool> peak_used(end - i, false);
        for (const auto& c : cand) {
            if (track_used[c.track] || peak_used[c.peak - i]) {
                continue;
            }
            track_used[c.track] = true;
            peak_used[c.peak - i] = true;
            auto& o = open[c.track];
            const auto gap = static_cast<double>(frame - o.peaks.back().frame);
            o.velocity = (peaks[c.peak].pixel - o.peaks.back().pixel) / gap;
            o.peaks.push_back(peaks[c.peak]);
        }
        for (std::size_t p = i; p < end; ++p) {
            if (!peak_used[p - i]) {
                open.push_back({{peaks[p]}, 0.0});
            }
        }
        i = end;
    }
    for (auto& o : open) {
        close(std::move(o));
    }
    std::sort(done.begin(), done.end(), [](const Trajectory& a, const Trajectory& b) {
        return a.peaks.front().frame != b.peaks.front().frame ? a.peaks.front().frame < b.peaks.front().frame
                                                              : a.peaks.front().pixel < b.peaks.front().pixel;
    });
    return done;
}

struct VelocityStats {
    double mean_um_s = 0.0;
    double std_um_s = 0.0;  ///< sample standard deviation
    double standard_error_um_s = 0.0;
    std::size_t count = 0;
};

/// Unweighted statistics over per-trajectory mean velocities.
inline VelocityStats velocity_stats(std::span<const Trajectory> trajectories) {
    if (trajectories.empty()) {
        throw NumericError("velocity_stats: no trajectories");
    }
    VelocityStats s;
    s.count = trajectories.size();
    for (const auto& t : trajectories) {
        s.mean_um_s += t.mean_velocity_um_s;
    }
    s.mean_um_s /= static_cast<double>(s.count);
    if (s.count > 1) {
        double ss = 0.0;
        for (const auto& t : trajectories) {
            ss += std::pow(t.mean_velocity_um_s - s.mean_um_s, 2);
        }
        s.std_um_s = std::sqrt(ss / static_cast<double>(s.count - 1));
        s.standard_error_um_s = s.std_um_s / std::sqrt(static_cast<double>(s.count));
    }
    return s;
}

struct AnalysisOptions {
    PeakOptions peaks;
    HoughOptions hough;
    LinkOptions link;
    std::size_t top_lines = 5;
    bool exclude_stuck = true;  ///< drop peaks of stuck tracks before the Hough transform
};

struct AnalysisResult {
    PeakSet peaks;
    std::optional<HoughSpectrum> spectrum;  ///< empty when fewer than two peaks remain
    DominantLines lines;
    std::vector<Trajectory> trajectories;
    std::optional<VelocityStats> stats;

    std::optional<double> dominant_theta_deg() const {
        if (!spectrum) {
            return std::nullopt;
        }
        return spectrum->dominant.theta_deg;
    }
};

inline AnalysisResult analyze(const Kymograph& k, const AnalysisOptions& opts = {}, unsigned workers = 0) {
    AnalysisResult r;
    r.peaks = extract_peaks(k, opts.peaks, workers);
    r.trajectories = link_trajectories(r.peaks, opts.link);
    std::vector<Peak> voting = r.peaks.peaks;
    if (opts.exclude_stuck) {
        for (const auto& t : r.trajectories) {
            if (!t.stuck) {
                continue;
            }
            std::erase_if(voting, [&](const Peak& p) {
                return std::any_of(t.peaks.begin(), t.peaks.end(), [&](const Peak& q) {
                    return q.frame == p.frame && q.pixel == p.pixel;
                });
            });
        }
    }
    if (voting.size() >= 2) {
        r.spectrum = hough(std::span<const Peak>(voting), opts.hough, workers);
        r.lines = dominant_lines(*r.spectrum, std::span<const Peak>(voting), opts.top_lines);
    }
    std::vector<Trajectory> moving;
    for (const auto& t : r.trajectories) {
        if (!t.stuck) {
            moving.push_back(t);
        }
    }
    if (!moving.empty()) {
        r.stats = velocity_stats(moving);
    }
    return r;
}

}  // namespace fibersieve
