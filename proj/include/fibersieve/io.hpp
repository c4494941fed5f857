#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "fiber_modes.hpp"
#include "taper_trap.hpp"
#include "track_analysis.hpp"
#include "transport.hpp"

namespace fibersieve {

inline constexpr const char* version = "0.1.0";

// ---------------------------------------------------------------------------------------------
// Text helpers

/// Shortest decimal form that reads back to the same double.
inline std::string format_number(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    std::array<char, 32> buf{};
    const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), r.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) {
            return out;
        }
        start = pos + 1;
    }
}

inline bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (s == "nan") {
        out = std::numeric_limits<double>::quiet_NaN();
        return true;
    }
    if (!s.empty() && s.front() == '+') {
        s.remove_prefix(1);
    }
    const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    return !s.empty() && r.ec == std::errc() && r.ptr == s.data() + s.size();
}

}  // namespace detail

// ---------------------------------------------------------------------------------------------
// Configuration: flat `key = value` lines, `#` starts a comment.

class Config {
public:
    static Config parse(std::istream& in) {
        Config c;
        std::string line;
        std::size_t n = 0;
        while (std::getline(in, line)) {
            ++n;
            std::string_view s = line;
            if (const auto hash = s.find('#'); hash != std::string_view::npos) {
                s = s.substr(0, hash);
            }
            s = detail::trim(s);
            if (s.empty()) {
                continue;
            }
            const auto eq = s.find('=');
            if (eq == std::string_view::npos) {
                throw ParseError("config: expected 'key = value'", n);
            }
            const std::string key(detail::trim(s.substr(0, eq)));
            const std::string value(detail::trim(s.substr(eq + 1)));
            if (key.empty() || key.find_first_of(" \t") != std::string::npos) {
                throw ParseError("config: malformed key '" + key + "'", n);
            }
            if (c.entries_.count(key) != 0) {
                throw ParseError("config: duplicate key '" + key + "'", n);
            }
            c.entries_[key] = {value, n};
        }
        return c;
    }

    static Config load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) {
            throw ConfigError("config: cannot open " + path.string());
        }
        return parse(in);
    }

    /// Command-line override; replaces any file value.
    void set(const std::string& key, const std::string& value) { entries_[key] = {value, 0}; }

    /// Parses `key=value` as given to --set.
    void set(std::string_view assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
        }
        set(std::string(detail::trim(assignment.substr(0, eq))), std::string(detail::trim(assignment.substr(eq + 1))));
    }

    bool has(const std::string& key) const { return entries_.count(key) != 0; }

    double number(const std::string& key, double fallback) const {
        const auto* e = find(key);
        if (e == nullptr) {
            resolved_[key] = format_number(fallback);
            return fallback;
        }
        double v = 0.0;
        if (!detail::parse_double(e->value, v)) {
            fail(key, *e, "a number");
        }
        resolved_[key] = e->value;
        return v;
    }

    std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) const {
        const auto* e = find(key);
        if (e == nullptr) {
            resolved_[key] = std::to_string(fallback);
            return fallback;
        }
        std::uint64_t v = 0;
        const auto& s = e->value;
        const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
            fail(key, *e, "a non-negative integer");
        }
        resolved_[key] = s;
        return v;
    }

    bool flag(const std::string& key, bool fallback) const {
        const auto* e = find(key);
        if (e == nullptr) {
            resolved_[key] = fallback ? "true" : "false";
            return fallback;
        }
        resolved_[key] = e->value;
        if (e->value == "true" || e->value == "1" || e->value == "yes") {
            return true;
        }
        if (e->value == "false" || e->value == "0" || e->value == "no") {
            return false;
        }
        fail(key, *e, "true or false");
    }

    std::string text(const std::string& key, const std::string& fallback) const {
        const auto* e = find(key);
        resolved_[key] = e ? e->value : fallback;
        return e ? e->value : fallback;
    }

    /// Comma-separated list of numbers; empty when the key is absent.
    std::vector<double> numbers(const std::string& key, std::vector<double> fallback) const {
        const auto* e = find(key);
        if (e == nullptr) {
            std::string joined;
            for (std::size_t i = 0; i < fallback.size(); ++i) {
                joined += (i == 0 ? "" : ", ") + format_number(fallback[i]);
            }
            resolved_[key] = joined;
            return fallback;
        }
        std::vector<double> out;
        resolved_[key] = e->value;
        if (detail::trim(e->value).empty()) {
            return out;
        }
        for (auto part : detail::split(e->value, ',')) {
            double v = 0.0;
            if (!detail::parse_double(part, v)) {
                fail(key, *e, "a comma-separated list of numbers");
            }
            out.push_back(v);
        }
        return out;
    }

    /// Keys in the file or overrides that nothing has read; usually typos.
    std::vector<std::string> unused() const {
        std::vector<std::string> out;
        for (const auto& [k, e] : entries_) {
            if (resolved_.count(k) == 0) {
                out.push_back(k);
            }
        }
        return out;
    }

    void reject_unused() const {
        const auto u = unused();
        if (u.empty()) {
            return;
        }
        const auto& e = entries_.at(u.front());
        const std::string what = "config: unknown key '" + u.front() + "'";
        if (e.line > 0) {
            throw ParseError(what, e.line);
        }
        throw ConfigError(what);
    }

    /// Every key read so far with the value in effect, defaults included.
    const std::map<std::string, std::string>& resolved() const { return resolved_; }

    /// Distinct `prefix.N.` indices present, in numeric order (for species.N.*).
    std::vector<std::size_t> indices(const std::string& prefix) const {
        std::set<std::size_t> found;
        for (const auto& [k, e] : entries_) {
            if (k.rfind(prefix + ".", 0) != 0) {
                continue;
            }
            const auto rest = std::string_view(k).substr(prefix.size() + 1);
            std::size_t i = 0;
            const auto r = std::from_chars(rest.data(), rest.data() + rest.size(), i);
            if (r.ec == std::errc() && r.ptr != rest.data() && *r.ptr == '.') {
                found.insert(i);
            }
        }
        return {found.begin(), found.end()};
    }

private:
    struct Entry {
        std::string value;
        std::size_t line = 0;
    };

    const Entry* find(const std::string& key) const {
        const auto it = entries_.find(key);
        return it == entries_.end() ? nullptr : &it->second;
    }

    [[noreturn]] static void fail(const std::string& key, const Entry& e, const std::string& expected) {
        const std::string what = "config: " + key + " = '" + e.value + "' is not " + expected;
        if (e.line > 0) {
            throw ParseError(what, e.line);
        }
        throw ConfigError(what);
    }

    std::map<std::string, Entry> entries_;
    mutable std::map<std::string, std::string> resolved_;
};

// ---------------------------------------------------------------------------------------------
// CSV and graymap writers/readers

inline void write_surface_curve_csv(std::ostream& out, const SurfaceIntensityCurve& c) {
    out << "diameter_nm";
    for (double w : c.wavelengths_nm) {
        out << ", I_" << format_number(w) << "_per_W";
    }
    out << '\n';
    for (std::size_t i = 0; i < c.diameters_nm.size(); ++i) {
        out << format_number(c.diameters_nm[i]);
        for (std::size_t w = 0; w < c.wavelengths_nm.size(); ++w) {
            out << ", " << (c.guided[w][i] ? format_number(c.intensity[w][i]) : std::string("cutoff"));
        }
        out << '\n';
    }
}

struct ForceRatioRow {
    double diameter_nm = 0.0;
    double forward_pN_per_mW = 0.0;
    double backward_pN_per_mW = 0.0;
    double ratio = 0.0;
};

inline void write_force_ratio_csv(std::ostream& out, const std::vector<ForceRatioRow>& rows, double forward_nm,
                                  double backward_nm) {
    out << "D_nm, F" << format_number(forward_nm) << "_pN_per_mW, F" << format_number(backward_nm)
        << "_pN_per_mW, R\n";
    for (const auto& r : rows) {
        out << format_number(r.diameter_nm) << ", " << format_number(r.forward_pN_per_mW) << ", "
            << format_number(r.backward_pN_per_mW) << ", " << format_number(r.ratio) << '\n';
    }
}

inline void write_trap_csv(std::ostream& out, const ForceProfile& f, const PotentialProfile& u) {
    out << "z_um, d_nm, F" << format_number(f.beams.forward_wavelength_nm) << "_pN, F"
        << format_number(f.beams.backward_wavelength_nm) << "_pN, dF_pN, U_kBT\n";
    for (std::size_t i = 0; i < f.size(); ++i) {
        out << format_number(f.z_um[i]) << ", " << format_number(f.diameter_nm[i]);
        if (!f.valid[i]) {
            out << ", cutoff, cutoff, cutoff, cutoff\n";
            continue;
        }
        out << ", " << format_number(f.forward_pN[i]) << ", " << format_number(f.backward_pN[i]) << ", "
            << format_number(f.net_pN[i]) << ", " << format_number(u.u_kT[i]) << '\n';
    }
}

inline nlohmann::json to_json(const TrapReport& r) {
    nlohmann::json j;
    j["crossings"] = nlohmann::json::array();
    for (const auto& c : r.crossings) {
        j["crossings"].push_back(
            {{"z_um", c.z_um}, {"kind", to_string(c.kind)}, {"stiffness_pN_per_um", c.stiffness_pN_per_um}});
    }
    j["traps"] = r.count(CrossingKind::trap);
    j["anti_traps"] = r.count(CrossingKind::anti_trap);
    if (r.z_trap_um) {
        j["z_trap_um"] = *r.z_trap_um;
        j["stiffness_pN_per_um"] = r.stiffness_pN_per_um;
        j["depth_kT"] = r.depth_kT;
        j["barrier_left_kT"] = r.barrier_left_kT;
        j["barrier_right_kT"] = r.barrier_right_kT;
        j["open"] = r.open;
    } else {
        j["z_trap_um"] = nullptr;
    }
    return j;
}

/// Kymograph as CSV: one row per frame, one column per pixel, calibration in a leading comment.
inline void write_kymograph_csv(std::ostream& out, const Kymograph& k) {
    out << "# pixel_pitch_um=" << format_number(k.pixel_pitch_um)
        << " frame_period_s=" << format_number(k.frame_period_s) << " origin_um=" << format_number(k.origin_um)
        << '\n';
    std::string line;
    for (std::size_t f = 0; f < k.frames; ++f) {
        line.clear();
        for (std::size_t p = 0; p < k.pixels; ++p) {
            if (p > 0) {
                line += ',';
            }
            line += format_number(k.at(f, p));
        }
        out << line << '\n';
    }
}

namespace detail {

// Reads `name=value` pairs from a header comment into the kymograph calibration.
inline void read_calibration(std::string_view header, Kymograph& k, std::size_t line) {
    for (auto token : split(header, ' ')) {
        const auto eq = token.find('=');
        if (token.empty() || eq == std::string_view::npos) {
            continue;
        }
        const auto name = token.substr(0, eq);
        double v = 0.0;
        if (!parse_double(token.substr(eq + 1), v)) {
            throw ParseError("kymograph: bad header value '" + std::string(token) + "'", line);
        }
        if (name == "pixel_pitch_um") {
            k.pixel_pitch_um = v;
        } else if (name == "frame_period_s") {
            k.frame_period_s = v;
        } else if (name == "origin_um") {
            k.origin_um = v;
        }
    }
}

}  // namespace detail

inline Kymograph read_kymograph_csv(std::istream& in) {
    Kymograph k;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        const auto s = detail::trim(line);
        if (s.empty()) {
            continue;
        }
        if (s.front() == '#') {
            detail::read_calibration(s.substr(1), k, n);
            continue;
        }
        const auto cells = detail::split(s, ',');
        if (k.frames == 0) {
            k.pixels = cells.size();
        } else if (cells.size() != k.pixels) {
            throw ParseError("kymograph: expected " + std::to_string(k.pixels) + " columns, found " +
                                 std::to_string(cells.size()),
                             n);
        }
        for (auto c : cells) {
            double v = 0.0;
            if (!detail::parse_double(c, v) || !std::isfinite(v)) {
                throw ParseError("kymograph: '" + std::string(c) + "' is not a finite number", n);
            }
            k.data.push_back(v);
        }
        ++k.frames;
    }
    if (k.frames == 0) {
        throw ConfigError("kymograph: no data rows");
    }
    if (!(k.pixel_pitch_um > 0.0) || !(k.frame_period_s > 0.0)) {
        throw ConfigError("kymograph: calibration must be positive");
    }
    return k;
}

/// 8-bit binary graymap (P5), width = pixels, height = frames. Values are mapped linearly onto
/// 0..255; offset and scale go in a header comment so a reader recovers counts to within half a
/// quantisation step.
inline void write_kymograph_pgm(std::ostream& out, const Kymograph& k) {
    const auto [lo, hi] = std::minmax_element(k.data.begin(), k.data.end());
    const double offset = k.data.empty() ? 0.0 : *lo;
    const double span = k.data.empty() ? 0.0 : *hi - *lo;
    const double scale = span > 0.0 ? span / 255.0 : 1.0;
    out << "P5\n# pixel_pitch_um=" << format_number(k.pixel_pitch_um)
        << " frame_period_s=" << format_number(k.frame_period_s) << " origin_um=" << format_number(k.origin_um)
        << " offset=" << format_number(offset) << " scale=" << format_number(scale) << '\n'
        << k.pixels << ' ' << k.frames << "\n255\n";
    std::vector<unsigned char> bytes(k.data.size());
    for (std::size_t i = 0; i < k.data.size(); ++i) {
        bytes[i] = static_cast<unsigned char>(std::clamp(std::lround((k.data[i] - offset) / scale), 0L, 255L));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline Kymograph read_kymograph_pgm(std::istream& in) {
    Kymograph k;
    double offset = 0.0;
    double scale = 1.0;
    std::size_t line = 0;
    // Header tokens: magic, width, height, maxval; comments may sit between them.
    std::vector<std::string> tokens;
    while (tokens.size() < 4) {
        std::string l;
        if (!std::getline(in, l)) {
            throw ParseError("graymap: truncated header", line);
        }
        ++line;
        const auto s = detail::trim(l);
        if (!s.empty() && s.front() == '#') {
            detail::read_calibration(s.substr(1), k, line);
            for (auto token : detail::split(s.substr(1), ' ')) {
                const auto eq = token.find('=');
                if (eq == std::string_view::npos) {
                    continue;
                }
                double v = 0.0;
                if (token.substr(0, eq) == "offset" && detail::parse_double(token.substr(eq + 1), v)) {
                    offset = v;
                } else if (token.substr(0, eq) == "scale" && detail::parse_double(token.substr(eq + 1), v)) {
                    scale = v;
                }
            }
            continue;
        }
        std::istringstream ts{std::string(s)};
        for (std::string t; ts >> t;) {
            tokens.push_back(t);
        }
    }
    if (tokens[0] != "P5") {
        throw ParseError("graymap: only binary P5 files are supported", 1);
    }
    std::size_t dims[3]{};
    for (int i = 0; i < 3; ++i) {
        const auto& t = tokens[static_cast<std::size_t>(i) + 1];
        const auto r = std::from_chars(t.data(), t.data() + t.size(), dims[i]);
        if (r.ec != std::errc() || r.ptr != t.data() + t.size() || dims[i] == 0) {
            throw ParseError("graymap: bad header field '" + t + "'", line);
        }
    }
    if (dims[2] > 255) {
        throw ParseError("graymap: only 8-bit data is supported", line);
    }
    k.pixels = dims[0];
    k.frames = dims[1];
    std::vector<unsigned char> bytes(k.pixels * k.frames);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
        throw ParseError("graymap: pixel data shorter than header says", line + 1);
    }
    k.data.resize(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        k.data[i] = offset + scale * static_cast<double>(bytes[i]);
    }
    return k;
}

/// Chooses the reader by extension: .pgm is a graymap, anything else CSV.
inline Kymograph read_kymograph(const std::filesystem::path& path) {
    const bool pgm = path.extension() == ".pgm";
    std::ifstream in(path, pgm ? std::ios::binary : std::ios::in);
    if (!in) {
        throw ConfigError("cannot open " + path.string());
    }
    return pgm ? read_kymograph_pgm(in) : read_kymograph_csv(in);
}

inline void write_peaks_csv(std::ostream& out, const PeakSet& s) {
    out << "frame, pixel, intensity\n";
    for (const auto& p : s.peaks) {
        out << p.frame << ", " << format_number(p.pixel) << ", " << format_number(p.intensity) << '\n';
    }
}

inline void write_lines_csv(std::ostream& out, const std::vector<HoughLine>& lines) {
    out << "rho, theta_deg, votes, slope_px_per_frame\n";
    for (const auto& l : lines) {
        out << format_number(l.rho) << ", " << format_number(l.theta_deg) << ", " << l.votes << ", "
            << format_number(l.slope_px_per_frame()) << '\n';
    }
}

/// One row per trajectory; frames and pixels are space-separated inside their cells.
inline void write_trajectories_csv(std::ostream& out, const std::vector<Trajectory>& ts) {
    out << "id, velocity_um_s, velocity_std_um_s, duration_s, stuck, frames, pixels\n";
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const auto& t = ts[i];
        out << i << ", " << format_number(t.mean_velocity_um_s) << ", " << format_number(t.velocity_std_um_s)
            << ", " << format_number(t.duration_s) << ", " << (t.stuck ? 1 : 0) << ", ";
        for (std::size_t j = 0; j < t.peaks.size(); ++j) {
            out << (j ? " " : "") << t.peaks[j].frame;
        }
        out << ", ";
        for (std::size_t j = 0; j < t.peaks.size(); ++j) {
            out << (j ? " " : "") << format_number(t.peaks[j].pixel);
        }
        out << '\n';
    }
}

/// Ground-truth positions: one row per particle per recorded frame.
inline void write_truth_csv(std::ostream& out, const TrajectoryTruth& truth) {
    out << "particle_id, species, stuck, t_s, z_um\n";
    for (const auto& tr : truth.tracks) {
        const std::string& name = tr.species < truth.species_names.size() ? truth.species_names[tr.species]
                                                                          : std::to_string(tr.species);
        for (std::size_t i = 0; i < tr.frame.size(); ++i) {
            out << tr.id << ", " << name << ", " << (tr.stuck ? 1 : 0) << ", "
                << format_number(static_cast<double>(tr.frame[i]) * truth.frame_period_s) << ", "
                << format_number(tr.z_um[i]) << '\n';
        }
    }
}

// ---------------------------------------------------------------------------------------------
// Digests and the run manifest

inline std::string sha256_hex(std::istream& in) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
        throw Error("sha256: digest context unavailable");
    }
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0) {
            EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
        }
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xF];
    }
    return out;
}

inline std::string sha256_hex(const std::string& bytes) {
    std::istringstream in(bytes);
    return sha256_hex(in);
}

inline std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open " + path.string());
    }
    return sha256_hex(in);
}

/// What a run read and wrote. Holds no timestamps, so replaying a manifest reproduces it exactly.
class RunManifest {
public:
    RunManifest(std::string command, std::uint64_t seed, std::filesystem::path out_dir)
        : command_(std::move(command)), seed_(seed), dir_(std::move(out_dir)) {}

    const std::filesystem::path& dir() const { return dir_; }

    /// Opens a file under the output directory; record() it once closed.
    std::ofstream open(const std::filesystem::path& relative, bool binary = false) const {
        const auto path = dir_ / relative;
        std::filesystem::create_directories(path.parent_path());
        std::ofstream out(path, binary ? std::ios::binary | std::ios::out : std::ios::out);
        if (!out) {
            throw ConfigError("cannot write " + path.string());
        }
        return out;
    }

    void record(const std::filesystem::path& relative) {
        const auto path = dir_ / relative;
        outputs_.push_back({relative.generic_string(), std::filesystem::file_size(path), sha256_file(path)});
    }

    /// Writes a whole file and records it.
    template <class Writer>
    void write(const std::filesystem::path& relative, Writer&& writer, bool binary = false) {
        {
            auto out = open(relative, binary);
            writer(out);
            if (!out) {
                throw ConfigError("write failed: " + (dir_ / relative).string());
            }
        }
        record(relative);
    }

    nlohmann::json to_json(const Config& config) const {
        nlohmann::json j;
        j["tool"] = "fibersieve";
        j["version"] = version;
        j["command"] = command_;
        j["seed"] = seed_;
        j["config"] = config.resolved();
        auto files = nlohmann::json::array();
        auto sorted = outputs_;
        std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
        for (const auto& o : sorted) {
            files.push_back({{"path", o.path}, {"bytes", o.bytes}, {"sha256", o.sha256}});
        }
        j["outputs"] = files;
        return j;
    }

    void write_manifest(const Config& config) const {
        auto out = open("manifest.json");
        out << to_json(config).dump(2) << '\n';
    }

    void merge(const RunManifest& other, const std::filesystem::path& prefix) {
        for (const auto& o : other.outputs_) {
            outputs_.push_back({(prefix / o.path).generic_string(), o.bytes, o.sha256});
        }
    }

private:
    struct Output {
        std::string path;
        std::uintmax_t bytes = 0;
        std::string sha256;
    };

    std::string command_;
    std::uint64_t seed_;
    std::filesystem::path dir_;
    std::vector<Output> outputs_;
};

}  // namespace fibersieve
