#include "sloc/dataset.h"

#include "sloc/error.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace sloc {

namespace fs = std::filesystem;

namespace {

struct Problems {
    std::vector<std::pair<ErrorCode, std::string>> items;

    void add(ErrorCode code, const std::string &msg) { items.emplace_back(code, msg); }
    void add(ErrorCode code, const fs::path &file, int line, const std::string &msg) {
        add(code, file.string() + ":" + std::to_string(line) + ": " + msg);
    }
    void raise() const {
        if (items.empty())
            return;
        std::string msg;
        for (const auto &[code, text] : items)
            msg += (msg.empty() ? "" : "\n") + text;
        throw Error(items.front().first, msg);
    }
};

// Calls `fn(tokens, line_number)` for every non-empty, non-comment line.
template <typename Fn> bool for_each_line(const fs::path &path, Problems &problems, Fn &&fn) {
    std::ifstream in(path);
    if (!in) {
        problems.add(ErrorCode::kMissingReference, path.string() + ": cannot open file");
        return false;
    }
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#')
            continue;
        std::istringstream ss(line);
        std::vector<std::string> tokens;
        for (std::string tok; ss >> tok;)
            tokens.push_back(tok);
        fn(tokens, number);
    }
    return true;
}

bool parse_double(const std::string &s, double &out) {
    try {
        std::size_t used = 0;
        out = std::stod(s, &used);
        return used == s.size() && std::isfinite(out);
    } catch (...) {
        return false;
    }
}

bool parse_int(const std::string &s, int &out) {
    try {
        std::size_t used = 0;
        out = std::stoi(s, &used);
        return used == s.size();
    } catch (...) {
        return false;
    }
}

bool parse_doubles(const std::vector<std::string> &tokens, std::size_t from, std::size_t count, double *out) {
    for (std::size_t k = 0; k < count; ++k)
        if (!parse_double(tokens[from + k], out[k]))
            return false;
    return true;
}

// Accepts quaternions whose norm is within 1e-3 of one and renormalizes.
std::optional<Rotation> parse_rotation(const double *q, std::string &why) {
    const Vec4 v(q[0], q[1], q[2], q[3]);
    if (std::abs(v.norm() - 1.0) > 1e-3) {
        std::ostringstream ss;
        ss << "quaternion norm " << v.norm() << " is not 1";
        why = ss.str();
        return std::nullopt;
    }
    return rotation_from_quaternion(v.normalized());
}

std::map<std::string, Pose> parse_poses(const fs::path &path, Problems &problems) {
    std::map<std::string, Pose> poses;
    for_each_line(path, problems, [&](const std::vector<std::string> &tok, int line) {
        double v[7];
        if (tok.size() != 8 || !parse_doubles(tok, 1, 7, v)) {
            problems.add(ErrorCode::kParse, path, line, "expected: name qw qx qy qz tx ty tz");
            return;
        }
        std::string why;
        const auto R = parse_rotation(v, why);
        if (!R) {
            problems.add(ErrorCode::kInvariantViolation, path, line, why);
            return;
        }
        if (!poses.emplace(tok[0], Pose(*R, Vec3(v[4], v[5], v[6]))).second)
            problems.add(ErrorCode::kInvariantViolation, path, line, "duplicate image " + tok[0]);
    });
    return poses;
}

std::map<std::string, Camera> parse_intrinsics(const fs::path &path, Problems &problems) {
    std::map<std::string, Camera> cameras;
    for_each_line(path, problems, [&](const std::vector<std::string> &tok, int line) {
        if (tok.size() >= 2 && tok[1] != "PINHOLE") {
            problems.add(ErrorCode::kInvariantViolation, path, line,
                         "camera model " + tok[1] + " not supported (undistorted PINHOLE only)");
            return;
        }
        Camera cam;
        double f[4];
        if (tok.size() != 8 || !parse_int(tok[2], cam.width) || !parse_int(tok[3], cam.height) ||
            !parse_doubles(tok, 4, 4, f)) {
            problems.add(ErrorCode::kParse, path, line, "expected: name PINHOLE width height fx fy cx cy");
            return;
        }
        cam.fx = f[0];
        cam.fy = f[1];
        cam.cx = f[2];
        cam.cy = f[3];
        if (!cam.valid()) {
            problems.add(ErrorCode::kInvariantViolation, path, line, "invalid pinhole intrinsics for " + tok[0]);
            return;
        }
        if (!cameras.emplace(tok[0], cam).second)
            problems.add(ErrorCode::kInvariantViolation, path, line, "duplicate image " + tok[0]);
    });
    return cameras;
}

void put_u32(std::string &buf, std::uint32_t v) {
    for (int k = 0; k < 4; ++k)
        buf.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

void put_f32(std::string &buf, float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(buf, v);
}

std::uint32_t get_u32(const std::string &buf, std::size_t at) {
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k)
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[at + k])) << (8 * k);
    return v;
}

float get_f32(const std::string &buf, std::size_t at) {
    const std::uint32_t v = get_u32(buf, at);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
}

std::string read_file(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::kMissingReference, path.string() + ": cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path &path, const std::string &data) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorCode::kInvalidArgument, path.string() + ": cannot write file");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

constexpr std::uint32_t kDepthFlag = 1u;
constexpr std::uint32_t kIdFlag = 2u;

} // namespace

std::vector<std::string> Dataset::queries() const {
    std::vector<std::string> q;
    for (const auto &[name, list] : retrieval)
        q.push_back(name);
    return q;
}

fs::path match_file_name(const std::string &query, const std::string &database) {
    std::string name = query + "__" + database + ".m32";
    std::replace(name.begin(), name.end(), '/', '%');
    return name;
}

void write_match_file(const fs::path &path, const MatchSet &set) {
    std::string buf = "FLM1";
    put_u32(buf, static_cast<std::uint32_t>(set.size()));
    const bool depths = set.has_depths(), ids = !set.query_keypoint_ids.empty();
    put_u32(buf, (depths ? kDepthFlag : 0u) | (ids ? kIdFlag : 0u));
    for (const Correspondence &c : set.matches) {
        put_f32(buf, static_cast<float>(c.query.x()));
        put_f32(buf, static_cast<float>(c.query.y()));
        put_f32(buf, static_cast<float>(c.database.x()));
        put_f32(buf, static_cast<float>(c.database.y()));
    }
    if (depths)
        for (const DepthPair &d : set.depths) {
            put_f32(buf, static_cast<float>(d.query));
            put_f32(buf, static_cast<float>(d.database));
        }
    if (ids)
        for (int id : set.query_keypoint_ids)
            put_u32(buf, static_cast<std::uint32_t>(id));
    write_file(path, buf);
}

MatchSet read_match_file(const fs::path &path) {
    const std::string buf = read_file(path);
    auto fail = [&](const std::string &why) { throw Error(ErrorCode::kParse, path.string() + ": " + why); };
    if (buf.size() < 12 || buf.compare(0, 4, "FLM1") != 0)
        fail("not a match file (bad header)");
    const std::size_t n = get_u32(buf, 4);
    const std::uint32_t flags = get_u32(buf, 8);
    if (flags & ~(kDepthFlag | kIdFlag))
        fail("unknown header flags");
    const std::size_t expected =
        12 + n * 16 + ((flags & kDepthFlag) ? n * 8 : 0) + ((flags & kIdFlag) ? n * 4 : 0);
    if (buf.size() != expected)
        fail("size does not match the header count");
    MatchSet set;
    std::size_t at = 12;
    for (std::size_t i = 0; i < n; ++i, at += 16) {
        const Correspondence c{Vec2(get_f32(buf, at), get_f32(buf, at + 4)),
                               Vec2(get_f32(buf, at + 8), get_f32(buf, at + 12))};
        if (!c.query.allFinite() || !c.database.allFinite())
            fail("non-finite pixel coordinates");
        set.matches.push_back(c);
    }
    if (flags & kDepthFlag)
        for (std::size_t i = 0; i < n; ++i, at += 8)
            set.depths.push_back({get_f32(buf, at), get_f32(buf, at + 4)});
    if (flags & kIdFlag)
        for (std::size_t i = 0; i < n; ++i, at += 4)
            set.query_keypoint_ids.push_back(static_cast<int>(get_u32(buf, at)));
    return set;
}

double DepthMap::at(const Vec2 &pixel) const {
    const long x = std::lround(std::floor(pixel.x())), y = std::lround(std::floor(pixel.y()));
    if (x < 0 || y < 0 || x >= width || y >= height)
        return std::nan("");
    return values[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
}

void write_pfm(const fs::path &path, const DepthMap &map) {
    std::string buf = "Pf\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n-1.0\n";
    // PFM stores the bottom row first.
    for (int y = map.height - 1; y >= 0; --y)
        for (int x = 0; x < map.width; ++x)
            put_f32(buf, map.values[static_cast<std::size_t>(y) * map.width + x]);
    write_file(path, buf);
}

DepthMap read_pfm(const fs::path &path) {
    const std::string buf = read_file(path);
    std::istringstream header(buf);
    std::string magic;
    DepthMap map;
    double scale = 0.0;
    header >> magic >> map.width >> map.height >> scale;
    if (!header || magic != "Pf" || map.width <= 0 || map.height <= 0)
        throw Error(ErrorCode::kParse, path.string() + ": not a single-channel PFM file");
    if (scale >= 0.0)
        throw Error(ErrorCode::kParse, path.string() + ": big-endian PFM not supported");
    const std::size_t start = static_cast<std::size_t>(header.tellg()) + 1;
    const std::size_t count = static_cast<std::size_t>(map.width) * static_cast<std::size_t>(map.height);
    if (buf.size() != start + 4 * count)
        throw Error(ErrorCode::kParse, path.string() + ": truncated PFM data");
    map.values.resize(count);
    std::size_t at = start;
    for (int y = map.height - 1; y >= 0; --y)
        for (int x = 0; x < map.width; ++x, at += 4)
            map.values[static_cast<std::size_t>(y) * map.width + x] = get_f32(buf, at);
    return map;
}

void write_poses(std::ostream &os, const std::map<std::string, Pose> &poses) {
    os << std::setprecision(17);
    for (const auto &[name, pose] : poses) {
        const Vec4 q = quaternion_from_rotation(pose.R);
        os << name << ' ' << q(0) << ' ' << q(1) << ' ' << q(2) << ' ' << q(3) << ' ' << pose.t.x() << ' '
           << pose.t.y() << ' ' << pose.t.z() << '\n';
    }
}

void write_intrinsics(std::ostream &os, const std::map<std::string, Camera> &cameras) {
    os << std::setprecision(17);
    for (const auto &[name, c] : cameras)
        os << name << " PINHOLE " << c.width << ' ' << c.height << ' ' << c.fx << ' ' << c.fy << ' ' << c.cx << ' '
           << c.cy << '\n';
}

void write_retrieval(std::ostream &os, const std::map<std::string, std::vector<RetrievalEntry>> &retrieval) {
    os << std::setprecision(17);
    for (const auto &[query, list] : retrieval)
        for (const RetrievalEntry &e : list)
            os << query << ' ' << e.database << ' ' << e.score << '\n';
}

std::map<std::string, Pose> read_poses(const fs::path &path) {
    Problems problems;
    auto poses = parse_poses(path, problems);
    problems.raise();
    return poses;
}

Dataset load_dataset(const fs::path &manifest) {
    Problems problems;
    Dataset ds;
    ds.root = manifest.parent_path();
    std::map<std::string, std::string> entries;
    {
        std::ifstream in(manifest);
        if (!in)
            throw Error(ErrorCode::kMissingReference, manifest.string() + ": cannot open manifest");
        std::string line;
        int number = 0;
        static const std::set<std::string> known = {"database_poses", "intrinsics",     "retrieval",  "matches",
                                                    "depths",         "relative_poses", "local_recon", "query_poses"};
        while (std::getline(in, line)) {
            ++number;
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos || line[first] == '#')
                continue;
            const auto eq = line.find('=');
            auto trim = [](std::string s) {
                const auto a = s.find_first_not_of(" \t\r"), b = s.find_last_not_of(" \t\r");
                return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
            };
            if (eq == std::string::npos) {
                problems.add(ErrorCode::kParse, manifest, number, "expected key = value");
                continue;
            }
            const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
            if (!known.count(key))
                problems.add(ErrorCode::kParse, manifest, number, "unknown manifest key " + key);
            else
                entries[key] = value;
        }
    }
    auto path_of = [&](const std::string &key) { return ds.root / entries.at(key); };
    for (const char *required : {"database_poses", "intrinsics", "retrieval", "matches"})
        if (!entries.count(required))
            problems.add(ErrorCode::kParse, manifest.string() + ": missing manifest key " + required);
    problems.raise();

    ds.database_poses = parse_poses(path_of("database_poses"), problems);
    ds.cameras = parse_intrinsics(path_of("intrinsics"), problems);
    ds.matches_dir = path_of("matches");
    if (!fs::is_directory(ds.matches_dir))
        problems.add(ErrorCode::kMissingReference, ds.matches_dir.string() + ": matches directory not found");
    if (entries.count("depths")) {
        if (entries["depths"] == "embedded") {
            ds.embedded_depths = true;
        } else {
            ds.depths_dir = path_of("depths");
            if (!fs::is_directory(*ds.depths_dir))
                problems.add(ErrorCode::kMissingReference, ds.depths_dir->string() + ": depth directory not found");
        }
    }
    if (entries.count("query_poses"))
        ds.query_poses = parse_poses(path_of("query_poses"), problems);

    for (const auto &[name, pose] : ds.database_poses)
        if (!ds.cameras.count(name))
            problems.add(ErrorCode::kMissingReference, "database image " + name + " has no intrinsics");

    const fs::path retrieval_path = path_of("retrieval");
    for_each_line(retrieval_path, problems, [&](const std::vector<std::string> &tok, int line) {
        double score;
        if (tok.size() != 3 || !parse_double(tok[2], score)) {
            problems.add(ErrorCode::kParse, retrieval_path, line, "expected: query_name db_name score");
            return;
        }
        if (!ds.database_poses.count(tok[1])) {
            problems.add(ErrorCode::kMissingReference, retrieval_path, line, "unknown database image " + tok[1]);
            return;
        }
        if (!ds.cameras.count(tok[0])) {
            problems.add(ErrorCode::kMissingReference, retrieval_path, line, "query " + tok[0] + " has no intrinsics");
            return;
        }
        ds.retrieval[tok[0]].push_back({tok[1], score});
    });

    if (entries.count("relative_poses")) {
        const fs::path path = path_of("relative_poses");
        for_each_line(path, problems, [&](const std::vector<std::string> &tok, int line) {
            double v[7];
            if (tok.size() != 9 || !parse_doubles(tok, 2, 7, v)) {
                problems.add(ErrorCode::kParse, path, line, "expected: query_name db_name qw qx qy qz dx dy dz");
                return;
            }
            std::string why;
            const auto R = parse_rotation(v, why);
            const Vec3 d(v[4], v[5], v[6]);
            if (!R || !(d.norm() > 0.0)) {
                problems.add(ErrorCode::kInvariantViolation, path, line, R ? "zero translation direction" : why);
                return;
            }
            if (!ds.database_poses.count(tok[1])) {
                problems.add(ErrorCode::kMissingReference, path, line, "unknown database image " + tok[1]);
                return;
            }
            ds.relative_poses[tok[0]].push_back({tok[0], tok[1], *R, d.normalized()});
        });
    }
    if (entries.count("local_recon")) {
        const fs::path path = path_of("local_recon");
        std::map<std::string, std::size_t> index;
        for_each_line(path, problems, [&](const std::vector<std::string> &tok, int line) {
            double v[7];
            if (tok.size() != 9 || !parse_doubles(tok, 2, 7, v)) {
                problems.add(ErrorCode::kParse, path, line, "expected: subset_id image_name qw qx qy qz tx ty tz");
                return;
            }
            std::string why;
            const auto R = parse_rotation(v, why);
            if (!R) {
                problems.add(ErrorCode::kInvariantViolation, path, line, why);
                return;
            }
            auto [it, inserted] = index.emplace(tok[0], ds.local_subsets.size());
            if (inserted)
                ds.local_subsets.push_back({tok[0], {}});
            ds.local_subsets[it->second].poses[tok[1]] = Pose(*R, Vec3(v[4], v[5], v[6]));
        });
    }
    problems.raise();
    return ds;
}

MatchSet load_matches(const Dataset &ds, const std::string &query, const std::string &database) {
    MatchSet set = read_match_file(ds.matches_dir / match_file_name(query, database));
    set.query = query;
    set.database = database;
    const Camera &qc = ds.cameras.at(query), &dc = ds.cameras.at(database);
    for (const Correspondence &c : set.matches)
        if (!qc.contains(c.query) || !dc.contains(c.database))
            throw Error(ErrorCode::kInvariantViolation,
                        match_file_name(query, database).string() + ": pixel outside the image bounds");
    if (ds.depths_dir && !set.has_depths()) {
        const DepthMap dq = read_pfm(*ds.depths_dir / (query + ".pfm"));
        const DepthMap dd = read_pfm(*ds.depths_dir / (database + ".pfm"));
        for (const Correspondence &c : set.matches)
            set.depths.push_back({dq.at(c.query), dd.at(c.database)});
    }
    return set;
}

} // namespace sloc
