#include <doctest.h>

#include "sloc/dataset.h"
#include "sloc/error.h"

#include "support.h"

#include <filesystem>
#include <fstream>

using namespace sloc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string &name) : path(fs::temp_directory_path() / ("sloc_test_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_text(const fs::path &p, const std::string &text) {
    std::ofstream(p) << text;
}

// Three database images, one query retrieving two of them.
void write_fixture(const fs::path &dir, const std::string &db_poses) {
    fs::create_directories(dir / "matches");
    write_text(dir / "manifest.txt", "# fixture\ndatabase_poses = db.txt\nintrinsics = cams.txt\n"
                                     "retrieval = retrieval.txt\nmatches = matches\n");
    write_text(dir / "db.txt", db_poses);
    write_text(dir / "cams.txt", "a PINHOLE 640 480 500 500 320 240\nb PINHOLE 640 480 500 500 320 240\n"
                                 "c PINHOLE 640 480 500 500 320 240\nq PINHOLE 640 480 600 600 320 240\n");
    write_text(dir / "retrieval.txt", "q b 0.9\nq a 0.5\n");
}

const std::string kPoses = "a 1 0 0 0 0 0 0\nb 0 1 0 0 1 2 3\nc 0.5 0.5 0.5 0.5 0 0 1\n";

ErrorCode load_error(const fs::path &manifest, std::string *what = nullptr) {
    try {
        load_dataset(manifest);
    } catch (const Error &e) {
        if (what)
            *what = e.what();
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::kInvalidArgument;
}

} // namespace

TEST_CASE("fixture dataset loads") {
    TempDir tmp("load");
    write_fixture(tmp.path, kPoses);
    const Dataset ds = load_dataset(tmp.path / "manifest.txt");
    CHECK(ds.database_poses.size() == 3);
    CHECK(ds.cameras.size() == 4);
    CHECK(ds.queries() == std::vector<std::string>{"q"});
    REQUIRE(ds.retrieval.at("q").size() == 2);
    CHECK(ds.retrieval.at("q")[0].database == "b");
    CHECK_FALSE(ds.has_depths());
    CHECK((ds.database_poses.at("b").R - testing::rot(Vec3::UnitX(), std::numbers::pi)).norm() < 1e-12);
    CHECK(ds.database_poses.at("b").t == Vec3(1, 2, 3));
}

TEST_CASE("quaternion norm tolerance") {
    TempDir tmp("quat");
    write_fixture(tmp.path, "a 0.9999 0 0 0 0 0 0\nb 1 0 0 0 1 2 3\nc 1 0 0 0 0 0 1\n");
    const Dataset ds = load_dataset(tmp.path / "manifest.txt");
    CHECK((ds.database_poses.at("a").R - Mat3::Identity()).norm() < 1e-12);

    write_fixture(tmp.path, "a 0.9 0 0 0 0 0 0\nb 1 0 0 0 1 2 3\nc 1 0 0 0 0 0 1\n");
    std::string what;
    CHECK(load_error(tmp.path / "manifest.txt", &what) == ErrorCode::kInvariantViolation);
    CHECK(what.find("db.txt:1") != std::string::npos);
}

TEST_CASE("unknown retrieval image is a missing reference") {
    TempDir tmp("missing");
    write_fixture(tmp.path, kPoses);
    write_text(tmp.path / "retrieval.txt", "q b 0.9\nq zz 0.5\n");
    std::string what;
    CHECK(load_error(tmp.path / "manifest.txt", &what) == ErrorCode::kMissingReference);
    CHECK(what.find("retrieval.txt:2") != std::string::npos);
}

TEST_CASE("problems are reported together") {
    TempDir tmp("aggregate");
    write_fixture(tmp.path, "a 1 0 0 0 0 0\nb 1 0 0 0 1 2 3\nc 1 0 0 0 0 0 1\n");
    write_text(tmp.path / "retrieval.txt", "q b 0.9\nq zz 0.5\n");
    std::string what;
    CHECK(load_error(tmp.path / "manifest.txt", &what) == ErrorCode::kParse);
    CHECK(what.find("db.txt:1") != std::string::npos);
    CHECK(what.find("retrieval.txt:2") != std::string::npos);
}

TEST_CASE("manifest errors") {
    TempDir tmp("manifest");
    CHECK(load_error(tmp.path / "absent.txt") == ErrorCode::kMissingReference);
    write_fixture(tmp.path, kPoses);
    write_text(tmp.path / "manifest.txt", "database_poses = db.txt\nintrinsics = cams.txt\n");
    CHECK(load_error(tmp.path / "manifest.txt") == ErrorCode::kParse);
    write_text(tmp.path / "manifest.txt", "database_poses = db.txt\nintrinsics = cams.txt\nretrieval = retrieval.txt\n"
                                          "matches = matches\nbogus = 1\n");
    CHECK(load_error(tmp.path / "manifest.txt") == ErrorCode::kParse);
    write_text(tmp.path / "cams.txt", "a OPENCV 640 480 500 500 320 240\n");
    write_text(tmp.path / "manifest.txt", "database_poses = db.txt\nintrinsics = cams.txt\nretrieval = retrieval.txt\n"
                                          "matches = matches\n");
    CHECK(load_error(tmp.path / "manifest.txt") == ErrorCode::kInvariantViolation);
}

TEST_CASE("match file round trip") {
    TempDir tmp("m32");
    std::mt19937_64 rng(1);
    for (int flags = 0; flags < 4; ++flags) {
        MatchSet set;
        for (int i = 0; i < 37; ++i) {
            set.matches.push_back({Vec2(testing::uniform(rng, 0, 640), testing::uniform(rng, 0, 480)),
                                   Vec2(testing::uniform(rng, 0, 640), testing::uniform(rng, 0, 480))});
            if (flags & 1)
                set.depths.push_back({testing::uniform(rng, 1, 9), testing::uniform(rng, 1, 9)});
            if (flags & 2)
                set.query_keypoint_ids.push_back(i * 3);
        }
        const fs::path p = tmp.path / "x.m32";
        write_match_file(p, set);
        CHECK(fs::file_size(p) == 12 + 37 * 16 + ((flags & 1) ? 37 * 8 : 0) + ((flags & 2) ? 37 * 4 : 0));
        const MatchSet back = read_match_file(p);
        REQUIRE(back.size() == set.size());
        for (std::size_t i = 0; i < set.size(); ++i) {
            CHECK(back.matches[i].query.x() == static_cast<float>(set.matches[i].query.x()));
            CHECK(back.matches[i].database.y() == static_cast<float>(set.matches[i].database.y()));
        }
        CHECK(back.depths.size() == set.depths.size());
        CHECK(back.query_keypoint_ids == set.query_keypoint_ids);
    }
}

TEST_CASE("match file byte layout") {
    TempDir tmp("layout");
    MatchSet set;
    set.matches.push_back({Vec2(1.0, 2.0), Vec2(3.0, 4.0)});
    write_match_file(tmp.path / "a.m32", set);
    std::ifstream in(tmp.path / "a.m32", std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), {});
    // float 1.0 is 0x3f800000, stored little endian.
    const std::string expected = std::string("FLM1") + std::string("\x01\0\0\0", 4) + std::string("\0\0\0\0", 4) +
                                 std::string("\0\0\x80\x3f", 4) + std::string("\0\0\0\x40", 4) +
                                 std::string("\0\0\x40\x40", 4) + std::string("\0\0\x80\x40", 4);
    CHECK(bytes == expected);
}

TEST_CASE("corrupt match files are parse errors") {
    TempDir tmp("corrupt");
    auto code_of = [&](const std::string &content) {
        write_text(tmp.path / "bad.m32", content);
        try {
            read_match_file(tmp.path / "bad.m32");
        } catch (const Error &e) {
            return e.code();
        }
        return ErrorCode::kInvalidArgument;
    };
    CHECK(code_of("garbage") == ErrorCode::kParse);
    CHECK(code_of(std::string("FLM1\x05\0\0\0\0\0\0\0", 12)) == ErrorCode::kParse);
    CHECK(code_of(std::string("FLM1\0\0\0\0\x08\0\0\0", 12)) == ErrorCode::kParse);
    write_text(tmp.path / "empty.m32", std::string("FLM1\0\0\0\0\0\0\0\0", 12));
    CHECK(read_match_file(tmp.path / "empty.m32").size() == 0);
}

TEST_CASE("match file names escape slashes") {
    CHECK(match_file_name("q/1.jpg", "db/a.jpg").string() == "q%1.jpg__db%a.jpg.m32");
}

TEST_CASE("PFM round trip and lookup") {
    TempDir tmp("pfm");
    DepthMap m;
    m.width = 3;
    m.height = 2;
    m.values = {1, 2, 3, 4, 5, 6};
    write_pfm(tmp.path / "d.pfm", m);
    const DepthMap back = read_pfm(tmp.path / "d.pfm");
    CHECK(back.values == m.values);
    CHECK(back.at(Vec2(2.5, 1.2)) == 6.0);
    CHECK(back.at(Vec2(0.0, 0.0)) == 1.0);
    CHECK(std::isnan(back.at(Vec2(3.0, 0.0))));
    CHECK(std::isnan(back.at(Vec2(-0.1, 0.0))));
}

TEST_CASE("matches take depths from depth maps") {
    TempDir tmp("depths");
    write_fixture(tmp.path, kPoses);
    fs::create_directories(tmp.path / "depths");
    std::ofstream(tmp.path / "manifest.txt", std::ios::app) << "depths = depths\n";
    DepthMap dq{640, 480, std::vector<float>(640 * 480, 2.0f)}, db{640, 480, std::vector<float>(640 * 480, 7.0f)};
    db.values[10 * 640 + 20] = 3.5f;
    write_pfm(tmp.path / "depths" / "q.pfm", dq);
    write_pfm(tmp.path / "depths" / "a.pfm", db);
    MatchSet set;
    set.matches = {{Vec2(5, 5), Vec2(20.4, 10.9)}, {Vec2(6, 6), Vec2(100, 100)}};
    write_match_file(tmp.path / "matches" / match_file_name("q", "a"), set);
    const Dataset ds = load_dataset(tmp.path / "manifest.txt");
    CHECK(ds.has_depths());
    const MatchSet m = load_matches(ds, "q", "a");
    REQUIRE(m.depths.size() == 2);
    CHECK(m.depths[0].query == 2.0);
    CHECK(m.depths[0].database == 3.5);
    CHECK(m.depths[1].database == 7.0);

    set.matches.push_back({Vec2(700, 5), Vec2(1, 1)});
    write_match_file(tmp.path / "matches" / match_file_name("q", "a"), set);
    bool out_of_bounds = false;
    try {
        load_matches(ds, "q", "a");
    } catch (const Error &e) {
        out_of_bounds = e.code() == ErrorCode::kInvariantViolation;
    }
    CHECK(out_of_bounds);
}

TEST_CASE("poses text round trip") {
    TempDir tmp("poses");
    std::mt19937_64 rng(3);
    std::map<std::string, Pose> poses;
    for (int i = 0; i < 10; ++i)
        poses["img" + std::to_string(i)] = Pose(testing::random_rotation(rng), Vec3(i, -i, 0.5 * i));
    {
        std::ofstream out(tmp.path / "p.txt");
        write_poses(out, poses);
    }
    const auto back = read_poses(tmp.path / "p.txt");
    REQUIRE(back.size() == poses.size());
    for (const auto &[name, p] : poses) {
        CHECK((back.at(name).R - p.R).norm() < 1e-14);
        CHECK((back.at(name).t - p.t).norm() < 1e-14);
    }
}
