#include "nebp/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace nebp {

namespace {

using Rng = std::mt19937_64;

enum class Stream : std::uint64_t { kTrajectory = 1, kShape = 2, kMeasurement = 3, kScenario = 4, kPrototype = 5 };

Rng make_stream(std::uint64_t seed, Stream stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    return Rng(seq);
}

Eigen::VectorXd noisy_descriptor(const Eigen::VectorXd& base, double noise, Rng& rng) {
    std::normal_distribution<double> normal(0.0, noise);
    Eigen::VectorXd v = base;
    for (Eigen::Index k = 0; k < v.size(); ++k) v(k) += normal(rng);
    const double n = v.norm();
    return n > 1e-12 ? Eigen::VectorXd(v / n) : base;
}

double clamp_score(double s) { return std::clamp(s, 1e-6, 1.0); }

}  // namespace

void ScenarioConfig::validate() const {
    if (n_frames < 0) throw ConfigError("n_frames must be nonnegative");
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    if (uniform_clutter_rate < 0.0) throw ConfigError("uniform_clutter_rate must be nonnegative");
    if (!(detection_prob >= 0.0 && detection_prob <= 1.0)) throw ConfigError("detection_prob must lie in [0,1]");
    if (process_noise < 0.0) throw ConfigError("process_noise must be nonnegative");
    if (shape_dim <= 0) throw ConfigError("shape_dim must be positive");
    if (shape_noise < 0.0 || clutter_velocity_std < 0.0) throw ConfigError("noise levels must be nonnegative");
    if (!is_symmetric_positive_semidefinite(meas_noise_cov)) throw ConfigError("meas_noise_cov must be PSD");
    if (true_score.alpha <= 0 || true_score.beta <= 0 || clutter_score.alpha <= 0 || clutter_score.beta <= 0) {
        throw ConfigError("score Beta parameters must be positive");
    }
    for (const auto& b : birth_schedule) {
        if (b.frame < 0 || b.frame >= n_frames) throw ConfigError("birth frame outside [0, n_frames)");
        if (!b.state.finite()) throw ConfigError("birth state must be finite");
        if (b.shape.size() != 0 && b.shape.size() != shape_dim) throw ConfigError("birth shape has wrong length");
    }
    for (const auto& d : death_schedule) {
        if (d.frame < 0 || d.frame >= n_frames) throw ConfigError("death frame outside [0, n_frames)");
        if (d.birth_index < 0 || d.birth_index >= static_cast<int>(birth_schedule.size())) {
            throw ConfigError("death event refers to an unknown birth");
        }
    }
    for (const auto& c : clutter_sources) {
        if (c.rate < 0.0 || c.spread < 0.0) throw ConfigError("clutter source rate and spread must be nonnegative");
        if (c.shape.size() != shape_dim) throw ConfigError("clutter source shape has wrong length");
    }
}

GroundTruth generate_ground_truth(const ScenarioConfig& cfg) {
    cfg.validate();
    Rng rng = make_stream(cfg.rng_seed, Stream::kTrajectory);
    Rng shape_rng = make_stream(cfg.rng_seed, Stream::kShape);

    const Eigen::Matrix4d transition = ModelParams::cv_transition(cfg.dt);
    const Eigen::MatrixXd noise_sqrt = psd_sqrt(ModelParams::cv_process_noise(cfg.process_noise, cfg.dt));

    struct Active {
        TrackId id;
        Eigen::Vector4d x;
        Eigen::VectorXd shape;
        int birth_index;
    };

    std::vector<Eigen::VectorXd> shapes;
    shapes.reserve(cfg.birth_schedule.size());
    for (const auto& b : cfg.birth_schedule) {
        shapes.push_back(b.shape.size() == 0 ? random_unit_vector(cfg.shape_dim, shape_rng)
                                             : Eigen::VectorXd(b.shape.normalized()));
    }

    GroundTruth gt;
    gt.frames.resize(static_cast<std::size_t>(cfg.n_frames));
    std::vector<Active> active;
    for (int k = 0; k < cfg.n_frames; ++k) {
        for (auto& obj : active) {
            obj.x = transition * obj.x;
            if (cfg.process_noise > 0.0) obj.x += sample_gaussian(noise_sqrt, rng);
        }
        std::erase_if(active, [&](const Active& obj) {
            if (!cfg.roi.contains(obj.x(0), obj.x(1))) return true;
            return std::any_of(cfg.death_schedule.begin(), cfg.death_schedule.end(), [&](const DeathEvent& d) {
                return d.birth_index == obj.birth_index && d.frame <= k;
            });
        });
        for (std::size_t n = 0; n < cfg.birth_schedule.size(); ++n) {
            const auto& b = cfg.birth_schedule[n];
            if (b.frame != k) continue;
            active.push_back({TrackId{n + 1}, b.state.vec(), shapes[n], static_cast<int>(n)});
        }
        auto& frame = gt.frames[static_cast<std::size_t>(k)];
        for (const auto& obj : active) {
            frame.push_back({obj.id, KinematicState::from(obj.x), obj.shape});
        }
    }
    return gt;
}

std::vector<MeasurementFrame> generate_measurements(const GroundTruth& gt, const ScenarioConfig& cfg) {
    cfg.validate();
    Rng rng = make_stream(cfg.rng_seed, Stream::kMeasurement);
    std::bernoulli_distribution detect(cfg.detection_prob);
    std::uniform_real_distribution<double> ux(cfg.roi.xmin, cfg.roi.xmax);
    std::uniform_real_distribution<double> uy(cfg.roi.ymin, cfg.roi.ymax);
    std::normal_distribution<double> clutter_vel(0.0, cfg.clutter_velocity_std);
    const Eigen::MatrixXd meas_sqrt = psd_sqrt(cfg.meas_noise_cov);

    std::vector<MeasurementFrame> out;
    out.reserve(gt.frames.size());
    for (std::size_t k = 0; k < gt.frames.size(); ++k) {
        MeasurementFrame frame;
        frame.frame = static_cast<int>(k);
        auto& meas = frame.measurements;

        for (const auto& obj : gt.frames[k]) {
            if (!detect(rng)) continue;
            const Eigen::Vector4d z = obj.state.vec() + Eigen::Vector4d(sample_gaussian(meas_sqrt, rng));
            Measurement m{z(0), z(1), z(2), z(3), clamp_score(sample_beta(cfg.true_score.alpha, cfg.true_score.beta, rng)),
                          noisy_descriptor(obj.shape, cfg.shape_noise, rng), static_cast<std::int64_t>(obj.id.value)};
            if (cfg.roi.contains(m.px, m.py)) meas.push_back(std::move(m));
        }

        std::poisson_distribution<int> n_uniform(cfg.uniform_clutter_rate);
        const int n_clutter = cfg.uniform_clutter_rate > 0.0 ? n_uniform(rng) : 0;
        for (int c = 0; c < n_clutter; ++c) {
            Measurement m;
            m.px = ux(rng);
            m.py = uy(rng);
            m.vx = clutter_vel(rng);
            m.vy = clutter_vel(rng);
            m.score = clamp_score(sample_beta(cfg.clutter_score.alpha, cfg.clutter_score.beta, rng));
            m.shape = random_unit_vector(cfg.shape_dim, rng);
            meas.push_back(std::move(m));
        }

        for (const auto& src : cfg.clutter_sources) {
            if (src.rate <= 0.0) continue;
            std::poisson_distribution<int> n_src(src.rate);
            const int count = n_src(rng);
            std::normal_distribution<double> spread(0.0, src.spread);
            for (int c = 0; c < count; ++c) {
                Measurement m;
                m.px = src.px + (src.spread > 0.0 ? spread(rng) : 0.0);
                m.py = src.py + (src.spread > 0.0 ? spread(rng) : 0.0);
                m.vx = clutter_vel(rng);
                m.vy = clutter_vel(rng);
                m.score = clamp_score(sample_beta(cfg.clutter_score.alpha, cfg.clutter_score.beta, rng));
                m.shape = noisy_descriptor(src.shape, cfg.shape_noise, rng);
                if (cfg.roi.contains(m.px, m.py)) meas.push_back(std::move(m));
            }
        }

        std::shuffle(meas.begin(), meas.end(), rng);
        out.push_back(std::move(frame));
    }
    return out;
}

Dataset simulate(const ScenarioConfig& cfg) {
    Dataset d;
    d.config = cfg;
    d.truth = generate_ground_truth(cfg);
    d.frames = generate_measurements(d.truth, cfg);
    return d;
}

ScenarioConfig sample_scenario(const ScenarioFamily& family, std::uint64_t scene_seed) {
    Rng rng = make_stream(scene_seed, Stream::kScenario);
    Rng proto_rng = make_stream(family.family_seed, Stream::kPrototype);

    std::vector<Eigen::VectorXd> prototypes;
    for (int p = 0; p < std::max(1, family.n_clutter_prototypes); ++p) {
        prototypes.push_back(random_unit_vector(family.shape_dim, proto_rng));
    }

    ScenarioConfig cfg;
    cfg.n_frames = family.n_frames;
    cfg.dt = family.dt;
    cfg.roi = family.roi;
    cfg.uniform_clutter_rate = family.uniform_clutter_rate;
    cfg.detection_prob = family.detection_prob;
    cfg.process_noise = family.process_noise;
    cfg.shape_dim = family.shape_dim;
    cfg.shape_noise = family.shape_noise;
    cfg.rng_seed = scene_seed;

    const double margin_x = 0.15 * (family.roi.xmax - family.roi.xmin);
    const double margin_y = 0.15 * (family.roi.ymax - family.roi.ymin);
    std::uniform_real_distribution<double> inner_x(family.roi.xmin + margin_x, family.roi.xmax - margin_x);
    std::uniform_real_distribution<double> inner_y(family.roi.ymin + margin_y, family.roi.ymax - margin_y);
    std::uniform_real_distribution<double> speed(family.min_speed, family.max_speed);
    std::uniform_int_distribution<int> n_obj(family.min_objects, std::max(family.min_objects, family.max_objects));
    const int last_birth = std::max(0, static_cast<int>(family.birth_window * (family.n_frames - 1)));
    std::uniform_int_distribution<int> birth_frame(0, last_birth);

    const int count = n_obj(rng);
    for (int n = 0; n < count; ++n) {
        const double x0 = inner_x(rng);
        const double y0 = inner_y(rng);
        // Head towards another interior point so most trajectories stay inside the region.
        const double tx = inner_x(rng);
        const double ty = inner_y(rng);
        double heading = std::atan2(ty - y0, tx - x0);
        if (std::hypot(tx - x0, ty - y0) < 1e-6) heading = 0.0;
        const double v = speed(rng);
        BirthEvent b;
        b.frame = birth_frame(rng);
        b.state = {x0, y0, v * std::cos(heading), v * std::sin(heading)};
        b.shape = random_unit_vector(family.shape_dim, rng);
        cfg.birth_schedule.push_back(std::move(b));
    }

    for (int c = 0; c < family.n_clutter_sources; ++c) {
        ClutterSource src;
        src.px = inner_x(rng);
        src.py = inner_y(rng);
        src.shape = noisy_descriptor(prototypes[static_cast<std::size_t>(c) % prototypes.size()],
                                     family.prototype_noise, rng);
        src.rate = family.clutter_source_rate;
        src.spread = family.clutter_source_spread;
        cfg.clutter_sources.push_back(std::move(src));
    }
    return cfg;
}

}  // namespace nebp
