#include "pgt/synthworld.hpp"

#include <json.hpp>

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "pgt/common.hpp"

namespace pgt::synthworld {

namespace {

double mod1(double x) { return x - std::floor(x); }

constexpr double kJitterMagnitude = 0.2;
constexpr double kSkipOffset = 0.5;
constexpr double kDriftFactor = 2.5;
constexpr double kTickStep = 0.125;
// Starting phase stays within one bin so normal videos share a template.
constexpr double kPhaseSpread = 1.0 / 16.0;

const char* anomaly_clause(Anomaly a) {
    switch (a) {
        case Anomaly::stall: return "stops moving and stays frozen";
        case Anomaly::reverse: return "suddenly moves in the opposite direction";
        case Anomaly::jitter: return "shakes erratically instead of moving smoothly";
        case Anomaly::skip: return "jumps discontinuously, skipping part of its motion";
        case Anomaly::drift: return "moves much faster than its normal rate";
        case Anomaly::none: return "moves as expected";
    }
    throw std::logic_error("bad anomaly");
}

}  // namespace

std::string paradigm_name(Paradigm p) {
    switch (p) {
        case Paradigm::rotation: return "rotation";
        case Paradigm::oscillation: return "oscillation";
        case Paradigm::linear_travel: return "linear_travel";
        case Paradigm::deform_rebound: return "deform_rebound";
        case Paradigm::ticking: return "ticking";
    }
    throw std::logic_error("bad paradigm");
}

std::string anomaly_name(Anomaly a) {
    switch (a) {
        case Anomaly::none: return "none";
        case Anomaly::stall: return "stall";
        case Anomaly::reverse: return "reverse";
        case Anomaly::jitter: return "jitter";
        case Anomaly::skip: return "skip";
        case Anomaly::drift: return "drift";
    }
    throw std::logic_error("bad anomaly");
}

Anomaly anomaly_from_name(const std::string& s) {
    if (s == "none") return Anomaly::none;
    if (s == "stall") return Anomaly::stall;
    if (s == "reverse") return Anomaly::reverse;
    if (s == "jitter") return Anomaly::jitter;
    if (s == "skip") return Anomaly::skip;
    if (s == "drift") return Anomaly::drift;
    throw std::invalid_argument("unknown anomaly name: " + s);
}

std::vector<CategorySpec> default_world() {
    // Ranges are narrow so each category has a tight normal envelope: every
    // anomaly transform (rate x2.5, sign flip, +0.5 offset, +-0.2 noise)
    // lands outside what any normal draw can produce.
    std::vector<CategorySpec> world;
    world.push_back({"wheel", "axle", Paradigm::rotation,
                     {{"omega", {0.124, 0.126}}}});
    world.push_back({"pendulum", "bob", Paradigm::oscillation,
                     {{"period", {7.98, 8.02}}, {"amplitude", {0.395, 0.405}}}});
    world.push_back({"slider", "carriage", Paradigm::linear_travel,
                     {{"speed", {0.1095, 0.1105}}}});
    world.push_back({"clip", "spring", Paradigm::deform_rebound,
                     {{"period", {7.95, 8.05}}}});
    world.push_back({"clock", "hand", Paradigm::ticking,
                     {{"interval", {4.0, 4.0}}}});
    return world;
}

const CategorySpec& find_category(const std::vector<CategorySpec>& world, const std::string& name) {
    for (const auto& c : world)
        if (c.name == name) return c;
    throw std::invalid_argument("unknown category: " + name);
}

int quantize(double s, int bins) {
    if (!(s >= 0.0 && s < 1.0)) throw std::out_of_range("quantize: state outside [0,1)");
    int b = static_cast<int>(std::floor(s * bins));
    return b >= bins ? bins - 1 : b;
}

std::string render_explanation(const CategorySpec& cat, Anomaly anomaly) {
    return "the " + cat.part + " of the " + cat.name + " " + anomaly_clause(anomaly);
}

double base_value(const Trajectory& traj, double t) {
    switch (traj.paradigm) {
        case Paradigm::rotation:
            return mod1(traj.phase + traj.rate * t);
        case Paradigm::oscillation:
            return 0.5 + traj.amp * std::sin(2.0 * M_PI * t / traj.period + traj.phase);
        case Paradigm::linear_travel: {
            double u = traj.phase + traj.rate * t;
            u -= 2.0 * std::floor(u / 2.0);
            double tri = u < 1.0 ? u : 2.0 - u;
            return 0.05 + 0.9 * tri;
        }
        case Paradigm::deform_rebound: {
            double q = 0.5 - 0.5 * std::cos(2.0 * M_PI * t / traj.period + traj.phase);
            return 0.1 + 0.8 * q * q;
        }
        case Paradigm::ticking:
            return mod1(traj.phase + kTickStep * std::floor(t / traj.rate));
    }
    throw std::logic_error("bad paradigm");
}

namespace {

Trajectory draw_trajectory(const CategorySpec& cat, Pcg32& rng) {
    Trajectory traj;
    traj.paradigm = cat.paradigm;
    switch (cat.paradigm) {
        case Paradigm::rotation: {
            auto r = cat.param_ranges.at("omega");
            traj.rate = rng.uniform(r.lo, r.hi);
            traj.phase = kPhaseSpread * rng.next_double();
            break;
        }
        case Paradigm::oscillation: {
            auto p = cat.param_ranges.at("period");
            auto a = cat.param_ranges.at("amplitude");
            traj.period = rng.uniform(p.lo, p.hi);
            traj.amp = rng.uniform(a.lo, a.hi);
            traj.phase = rng.uniform(0.0, 0.1);
            break;
        }
        case Paradigm::linear_travel: {
            auto r = cat.param_ranges.at("speed");
            traj.rate = rng.uniform(r.lo, r.hi);
            traj.phase = rng.uniform(0.0, 0.05);
            break;
        }
        case Paradigm::deform_rebound: {
            auto p = cat.param_ranges.at("period");
            traj.period = rng.uniform(p.lo, p.hi);
            traj.phase = rng.uniform(0.0, 0.15);
            break;
        }
        case Paradigm::ticking: {
            auto k = cat.param_ranges.at("interval");
            int lo = static_cast<int>(k.lo), hi = static_cast<int>(k.hi);
            traj.rate = static_cast<double>(lo + static_cast<int>(rng.next_bounded(hi - lo + 1)));
            traj.phase = kPhaseSpread * rng.next_double();
            break;
        }
    }
    return traj;
}

}  // namespace

VideoSample simulate_video(const CategorySpec& cat, Anomaly anomaly, uint64_t seed,
                           const WorldConfig& cfg) {
    if (cfg.frames < 8) throw std::invalid_argument("simulate_video: frames must be >= 8");
    if (cfg.bins < 2) throw std::invalid_argument("simulate_video: bins must be >= 2");
    const int T = cfg.frames;
    const int B = cfg.bins;

    Pcg32 rng(seed, fnv1a64(cat.name));
    Trajectory traj = draw_trajectory(cat, rng);

    std::vector<int> base(T);
    for (int t = 0; t < T; ++t) base[t] = quantize(base_value(traj, t), B);

    VideoSample v;
    v.category = cat.name;
    v.anomaly = anomaly;
    v.seed = seed;
    v.explanation = render_explanation(cat, anomaly);

    if (anomaly == Anomaly::none) {
        v.frames = base;
        v.label = 0;
        v.onset = -1;
        return v;
    }

    v.label = 1;
    const bool needs_separation =
        anomaly == Anomaly::stall || anomaly == Anomaly::reverse || anomaly == Anomaly::drift;

    for (int attempt = 0; attempt < 64; ++attempt) {
        // t0 uniform in [4, T-4]
        int t0 = 4 + static_cast<int>(rng.next_bounded(static_cast<uint32_t>(T - 7)));
        std::vector<int> frames = base;
        for (int t = t0; t < T; ++t) {
            double s;
            switch (anomaly) {
                case Anomaly::stall:
                    s = base_value(traj, t0);
                    break;
                case Anomaly::reverse:
                    s = base_value(traj, 2.0 * t0 - t);
                    break;
                case Anomaly::jitter: {
                    double noise = rng.uniform(-kJitterMagnitude, kJitterMagnitude);
                    s = base_value(traj, t) + noise;
                    s -= std::floor(s);
                    break;
                }
                case Anomaly::skip:
                    s = base_value(traj, t) + kSkipOffset;
                    s -= std::floor(s);
                    break;
                case Anomaly::drift:
                    s = base_value(traj, t0 + kDriftFactor * (t - t0));
                    break;
                default:
                    throw std::logic_error("bad anomaly");
            }
            frames[t] = quantize(s, B);
        }
        if (needs_separation) {
            int diff = 0;
            for (int t = t0; t < T; ++t) diff += frames[t] != base[t];
            if (diff * 4 < T - t0) continue;  // < 25% of post-onset frames changed, redraw t0
        }
        v.frames = std::move(frames);
        v.onset = t0;
        return v;
    }
    throw std::runtime_error("simulate_video: could not realize a separable anomaly for " +
                             cat.name + "/" + anomaly_name(anomaly));
}

std::vector<VideoSample> generate_dataset(const std::vector<CategorySpec>& world,
                                          int per_category, const std::string& id_prefix,
                                          uint64_t base_seed, const WorldConfig& cfg) {
    std::vector<VideoSample> out;
    out.reserve(world.size() * static_cast<size_t>(per_category));
    for (const auto& cat : world) {
        for (int i = 0; i < per_category; ++i) {
            Anomaly a = (i % 2 == 0) ? Anomaly::none : kAnomalies[(i / 2) % 5];
            char idbuf[160];
            std::snprintf(idbuf, sizeof(idbuf), "%s-%s-%04d", id_prefix.c_str(),
                          cat.name.c_str(), i);
            uint64_t seed = mix64(base_seed ^ fnv1a64(idbuf));
            VideoSample v = simulate_video(cat, a, seed, cfg);
            v.id = idbuf;
            out.push_back(std::move(v));
        }
    }
    return out;
}

std::string manifest_line(const VideoSample& v) {
    nlohmann::ordered_json j;
    j["id"] = v.id;
    j["category"] = v.category;
    j["frames"] = v.frames;
    j["label"] = v.label;
    j["anomaly"] = anomaly_name(v.anomaly);
    if (v.label == 1) j["t0"] = v.onset;
    j["explanation"] = v.explanation;
    j["seed"] = v.seed;
    return j.dump();
}

VideoSample parse_manifest_line(const std::string& line) {
    auto j = nlohmann::json::parse(line);
    VideoSample v;
    v.id = j.at("id").get<std::string>();
    v.category = j.at("category").get<std::string>();
    v.frames = j.at("frames").get<std::vector<int>>();
    v.label = j.at("label").get<int>();
    v.anomaly = anomaly_from_name(j.at("anomaly").get<std::string>());
    v.onset = j.contains("t0") ? j.at("t0").get<int>() : -1;
    v.explanation = j.at("explanation").get<std::string>();
    v.seed = j.at("seed").get<uint64_t>();
    return v;
}

std::string to_jsonl(const std::vector<VideoSample>& samples) {
    std::string out;
    for (const auto& v : samples) {
        out += manifest_line(v);
        out += '\n';
    }
    return out;
}

std::vector<VideoSample> from_jsonl(const std::string& text) {
    std::vector<VideoSample> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(parse_manifest_line(line));
    }
    return out;
}

}  // namespace pgt::synthworld
