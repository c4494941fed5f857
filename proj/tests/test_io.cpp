#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <sstream>

#include "fibersieve/io.hpp"
#include "fibersieve/pipeline.hpp"

using namespace fibersieve;
namespace fs = std::filesystem;

namespace {

Config parse(const std::string& text) {
    std::istringstream in(text);
    return Config::parse(in);
}

fs::path scratch_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("fibersieve_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Kymograph noisy_kymograph(std::size_t frames, std::size_t pixels, unsigned seed) {
    Kymograph k;
    k.frames = frames;
    k.pixels = pixels;
    k.pixel_pitch_um = 0.37;
    k.frame_period_s = 0.021;
    k.origin_um = -12.5;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(10.0, 3.0);
    for (std::size_t i = 0; i < frames * pixels; ++i) {
        k.data.push_back(std::max(0.0, n(rng)));
    }
    return k;
}

}  // namespace

TEST(Config, ReadsValuesCommentsAndDefaults) {
    const auto c = parse("# header\nfiber.waist_diameter_nm = 500   # trailing\n\nbeams.reversed = true\n");
    EXPECT_EQ(c.number("fiber.waist_diameter_nm", 550.0), 500.0);
    EXPECT_EQ(c.number("fiber.z_step_um", 1.0), 1.0);
    EXPECT_TRUE(c.flag("beams.reversed", false));
    EXPECT_EQ(c.resolved().at("fiber.z_step_um"), "1");
}

TEST(Config, ErrorsCarryLineNumbers) {
    try {
        parse("a.b = 1\n\nnot an assignment\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
    try {
        parse("a.b = 1\na.b = 2\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    const auto c = parse("x = 1\nbeams.p1_mW = two\n");
    try {
        c.number("beams.p1_mW", 0.0);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST(Config, OverridesWinAndUnknownKeysAreRejected) {
    auto c = parse("beams.p1_mW = 1\n");
    c.set(std::string_view("beams.p1_mW=3.5"));
    EXPECT_EQ(settings_from(c).beams.p1_mW, 3.5);
    auto typo = parse("beams.p1_mw = 1\n");
    EXPECT_THROW(settings_from(typo), ParseError);
    EXPECT_THROW(c.set(std::string_view("no-equals-sign")), ConfigError);
}

TEST(Config, SpeciesList) {
    const auto c = parse(
        "species.1.name = small\nspecies.1.diameter_nm = 100\nspecies.1.concentration_per_uL = 6.3e5\n"
        "species.0.name = large\nspecies.0.diameter_nm = 150\nspecies.0.rate_per_s = 1.1\n");
    const auto s = settings_from(c);
    ASSERT_EQ(s.sim.species.size(), 2u);
    EXPECT_EQ(s.sim.species[0].name, "large");
    EXPECT_EQ(s.sim.species[0].injection_rate_per_s, 1.1);
    EXPECT_EQ(s.sim.species[1].particle.diameter_nm, 100.0);
    EXPECT_NEAR(s.sim.species[1].injection_rate_per_s, 3.15, 1e-12);
}

TEST(Config, InvalidValuesAreConfigErrors) {
    EXPECT_THROW(settings_from(parse("fiber.z_step_um = 0\n")), ConfigError);
    EXPECT_THROW(settings_from(parse("particle.permittivity = silver\n")), ConfigError);
    EXPECT_THROW(settings_from(parse("sim.dt_s = -1\n")), ConfigError);
    auto empty = settings_from(parse("sweep.p1_mW =\n"));
    EXPECT_THROW(empty.sweep.validate(), ConfigError);
    auto unsorted = settings_from(parse("sweep.p1_mW = 1, 3, 2\n"));
    EXPECT_THROW(unsorted.sweep.validate(), ConfigError);
}

TEST(Config, ShippedFilesLoad) {
    for (const char* name : {"defaults.conf", "sweep_150.conf", "sweep_mixture.conf", "trap_100nm.conf"}) {
        EXPECT_NO_THROW(settings_from(Config::load(fs::path(FIBERSIEVE_CONFIG_DIR) / name))) << name;
    }
}

TEST(Config, DefaultsFileMatchesBuiltInDefaults) {
    const auto file = Config::load(fs::path(FIBERSIEVE_CONFIG_DIR) / "defaults.conf");
    settings_from(file);
    const Config empty;
    settings_from(empty);
    for (const auto& [key, value] : file.resolved()) {
        ASSERT_EQ(empty.resolved().count(key), 1u) << key;
        const auto& builtin = empty.resolved().at(key);
        double a = 0.0, b = 0.0;
        if (detail::parse_double(value, a) && detail::parse_double(builtin, b)) {
            EXPECT_NEAR(a, b, 1e-12 * std::abs(b)) << key;
        } else {
            EXPECT_EQ(value, builtin) << key;
        }
    }
}

TEST(Kymograph, CsvRoundTripIsExact) {
    const auto k = noisy_kymograph(7, 33, 1);
    std::stringstream buf;
    write_kymograph_csv(buf, k);
    const auto r = read_kymograph_csv(buf);
    EXPECT_EQ(r.frames, k.frames);
    EXPECT_EQ(r.pixels, k.pixels);
    EXPECT_EQ(r.data, k.data);
    EXPECT_EQ(r.pixel_pitch_um, k.pixel_pitch_um);
    EXPECT_EQ(r.frame_period_s, k.frame_period_s);
    EXPECT_EQ(r.origin_um, k.origin_um);
}

TEST(Kymograph, GraymapRoundTripWithinHalfStep) {
    const auto k = noisy_kymograph(9, 41, 2);
    std::stringstream buf;
    write_kymograph_pgm(buf, k);
    const auto r = read_kymograph_pgm(buf);
    ASSERT_EQ(r.data.size(), k.data.size());
    const auto [lo, hi] = std::minmax_element(k.data.begin(), k.data.end());
    const double step = (*hi - *lo) / 255.0;
    for (std::size_t i = 0; i < k.data.size(); ++i) {
        EXPECT_LE(std::abs(r.data[i] - k.data[i]), 0.5 * step + 1e-12);
    }
    EXPECT_EQ(r.pixel_pitch_um, k.pixel_pitch_um);
    EXPECT_EQ(r.origin_um, k.origin_um);
}

TEST(Kymograph, MalformedCsvReportsLine) {
    std::istringstream bad("# pixel_pitch_um=0.5\n1,2,3\n4,5,6\n7,oops,9\n");
    try {
        read_kymograph_csv(bad);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 4u);
    }
    std::istringstream ragged("1,2,3\n4,5\n");
    try {
        read_kymograph_csv(ragged);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    std::istringstream empty("# nothing\n");
    EXPECT_THROW(read_kymograph_csv(empty), ConfigError);
}

TEST(Kymograph, NoiseOnlyFileGivesNoTrajectories) {
    const auto dir = scratch_dir("noise");
    {
        std::ofstream out(dir / "noise.csv");
        write_kymograph_csv(out, noisy_kymograph(400, 300, 3));
    }
    const auto r = analyze(read_kymograph(dir / "noise.csv"));
    EXPECT_TRUE(r.trajectories.empty());
}

TEST(Digest, KnownVectors) {
    EXPECT_EQ(sha256_hex(std::string("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(sha256_hex(std::string()), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Manifest, ListsEveryOutputWithMatchingDigest) {
    const auto dir = scratch_dir("manifest");
    RunManifest m("test", 5, dir);
    m.write("a.txt", [](std::ostream& o) { o << "hello\n"; });
    m.write("sub/b.txt", [](std::ostream& o) { o << "abc"; });
    const Config c;
    const auto j = m.to_json(c);
    ASSERT_EQ(j["outputs"].size(), 2u);
    for (const auto& o : j["outputs"]) {
        EXPECT_EQ(o["sha256"].get<std::string>(), sha256_file(dir / o["path"].get<std::string>()));
    }
    EXPECT_EQ(j["outputs"][1]["sha256"], "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Manifest, SameConfigSameDigests) {
    auto c = parse("particle.diameter_nm = 150\nbeams.p1_mW = 5\nsim.duration_s = 2\nsim.burn_in_s = 5\n");
    const auto s = settings_from(c);
    const auto tables = species_tables(s);
    std::vector<std::string> digests;
    for (int rep = 0; rep < 2; ++rep) {
        const auto dir = scratch_dir("replay" + std::to_string(rep));
        RunManifest m("simulate", s.seed, dir);
        const auto r = simulate(s, tables, s.beams.p1_mW, s.seed, rep == 0 ? 1 : 3);
        m.write("truth.csv", [&](std::ostream& o) { write_truth_csv(o, r.truth); });
        m.write("kymograph.csv", [&](std::ostream& o) { write_kymograph_csv(o, r.kymograph); });
        digests.push_back(m.to_json(c).dump());
    }
    EXPECT_EQ(digests[0], digests[1]);
}

TEST(Curves, IdenticalWavelengthsGiveIdenticalColumns) {
    const auto curve = surface_intensity_curve(FiberSpec{}, {700.0, 700.0}, 500.0, 600.0, 25.0);
    std::ostringstream out;
    write_surface_curve_csv(out, curve);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "diameter_nm, I_700_per_W, I_700_per_W");
    while (std::getline(in, line)) {
        const auto cells = detail::split(line, ',');
        ASSERT_EQ(cells.size(), 3u);
        EXPECT_EQ(cells[1], cells[2]);
    }
}

TEST(Curves, CutoffMarkedInCsv) {
    FiberSpec thin;
    const auto curve = surface_intensity_curve(thin, {640.0, 785.0}, 20.0, 400.0, 20.0);
    ASSERT_TRUE(curve.truncated());
    std::ostringstream out;
    write_surface_curve_csv(out, curve);
    EXPECT_NE(out.str().find("cutoff"), std::string::npos);
}

TEST(TrapReport, NoPowerNoCrossings) {
    BeamConfig b;
    b.p1_mW = 0.0;
    b.p2_mW = 0.0;
    ParticleSpec p;
    const auto r = find_traps(force_profile(TaperGeometry{}, p, b));
    EXPECT_TRUE(r.crossings.empty());
    EXPECT_FALSE(r.z_trap_um);
    EXPECT_TRUE(to_json(r)["z_trap_um"].is_null());
}

TEST(Tracks, MatchingFollowsTruth) {
    TrajectoryTruth truth;
    truth.frames = 20;
    ParticleTrack a;
    a.id = 0;
    ParticleTrack b;
    b.id = 1;
    b.species = 1;
    for (std::size_t f = 0; f < 20; ++f) {
        a.frame.push_back(f);
        a.z_um.push_back(10.0);
        b.frame.push_back(f);
        b.z_um.push_back(30.0 + static_cast<double>(f));
    }
    truth.tracks = {a, b};
    Kymograph k;
    k.pixel_pitch_um = 0.5;
    Trajectory ta;
    Trajectory tb;
    Trajectory stray;
    for (std::size_t f = 0; f < 20; ++f) {
        ta.peaks.push_back({f, 20.5, 1.0});
        tb.peaks.push_back({f, 60.0 + 2.0 * static_cast<double>(f), 1.0});
        stray.peaks.push_back({f, 500.0, 1.0});
    }
    const auto m = match_tracks({tb, ta, stray}, truth, k);
    ASSERT_EQ(m.size(), 3u);
    EXPECT_EQ(m[0], 1u);
    EXPECT_EQ(m[1], 0u);
    EXPECT_FALSE(m[2]);
}
