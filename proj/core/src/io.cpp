#include "nebp/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace nebp {

namespace {

using nlohmann::json;

json number(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) throw std::invalid_argument("cannot serialize NaN");
    return v;
}

double get_number(const json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        throw ConfigError("expected a number, got \"" + s + "\"");
    }
    if (!j.is_number()) throw ConfigError("expected a number");
    return j.get<double>();
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        if constexpr (std::is_same_v<T, double>) {
            out = get_number(j.at(key));
        } else {
            out = j.at(key).get<T>();
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("field '") + key + "': " + e.what());
    }
}

json matrix(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from(const json& j) {
    if (!j.is_array() || j.empty()) throw ConfigError("expected a nonempty array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (static_cast<Eigen::Index>(j[static_cast<std::size_t>(r)].size()) != cols) {
            throw ConfigError("ragged matrix rows");
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = get_number(j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]);
        }
    }
    return m;
}

json vector_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v(k));
    return a;
}

Eigen::VectorXd vector_from(const json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t k = 0; k < j.size(); ++k) v(static_cast<Eigen::Index>(k)) = get_number(j[k]);
    return v;
}

json rect_json(const Rect& r) { return {{"xmin", r.xmin}, {"xmax", r.xmax}, {"ymin", r.ymin}, {"ymax", r.ymax}}; }

Rect rect_from(const json& j) {
    Rect r;
    read_field(j, "xmin", r.xmin);
    read_field(j, "xmax", r.xmax);
    read_field(j, "ymin", r.ymin);
    read_field(j, "ymax", r.ymax);
    if (!(r.xmax > r.xmin) || !(r.ymax > r.ymin)) throw ConfigError("roi must have positive extent");
    return r;
}

json state_json(const KinematicState& s) { return {s.px, s.py, s.vx, s.vy}; }

KinematicState state_from(const json& j) {
    if (!j.is_array() || j.size() != 4) throw ConfigError("state must be [px, py, vx, vy]");
    return {get_number(j[0]), get_number(j[1]), get_number(j[2]), get_number(j[3])};
}

void append_number(std::string& out, double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    return out;
}

double parse_double(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ConfigError("bad number in CSV: " + s);
    return v;
}

}  // namespace

json to_json(const ModelParams& p) {
    return {{"p_d", p.p_d},
            {"p_s", p.p_s},
            {"mu_fa", p.mu_fa},
            {"mu_u", p.mu_u},
            {"roi", rect_json(p.roi)},
            {"meas_matrix", matrix(p.meas_matrix)},
            {"meas_cov", matrix(p.meas_cov)},
            {"proc_cov", matrix(p.proc_cov)},
            {"dt", p.dt},
            {"t_dec", p.t_dec},
            {"t_pru", p.t_pru},
            {"t_new", p.t_new},
            {"n_particles", p.n_particles},
            {"L_da", p.max_da_iterations},
            {"da_tol", p.da_tol},
            {"gate", number(p.gate)},
            {"new_vel_std", p.new_vel_std},
            {"velocity_extent", p.velocity_extent},
            {"descriptor_decay", p.descriptor_decay}};
}

ModelParams model_params_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("model parameters must be a JSON object");
    ModelParams p;
    read_field(j, "p_d", p.p_d);
    read_field(j, "p_s", p.p_s);
    read_field(j, "mu_fa", p.mu_fa);
    read_field(j, "mu_u", p.mu_u);
    if (j.contains("roi")) p.roi = rect_from(j.at("roi"));
    if (j.contains("meas_matrix")) p.meas_matrix = matrix_from(j.at("meas_matrix"));
    if (j.contains("meas_cov")) p.meas_cov = matrix_from(j.at("meas_cov"));
    if (j.contains("proc_cov")) {
        const Eigen::MatrixXd q = matrix_from(j.at("proc_cov"));
        if (q.rows() != 4 || q.cols() != 4) throw ConfigError("proc_cov must be 4x4");
        p.proc_cov = q;
    }
    read_field(j, "dt", p.dt);
    read_field(j, "t_dec", p.t_dec);
    read_field(j, "t_pru", p.t_pru);
    read_field(j, "t_new", p.t_new);
    read_field(j, "n_particles", p.n_particles);
    read_field(j, "L_da", p.max_da_iterations);
    read_field(j, "da_tol", p.da_tol);
    read_field(j, "gate", p.gate);
    read_field(j, "new_vel_std", p.new_vel_std);
    read_field(j, "velocity_extent", p.velocity_extent);
    read_field(j, "descriptor_decay", p.descriptor_decay);
    return validate_params(p);
}

json to_json(const ScenarioConfig& c) {
    json births = json::array();
    for (const auto& b : c.birth_schedule) {
        births.push_back({{"frame", b.frame}, {"state", state_json(b.state)}, {"shape", vector_json(b.shape)}});
    }
    json deaths = json::array();
    for (const auto& d : c.death_schedule) deaths.push_back({{"birth_index", d.birth_index}, {"frame", d.frame}});
    json sources = json::array();
    for (const auto& s : c.clutter_sources) {
        sources.push_back({{"px", s.px}, {"py", s.py}, {"shape", vector_json(s.shape)}, {"rate", s.rate},
                           {"spread", s.spread}});
    }
    return {{"n_frames", c.n_frames},
            {"dt", c.dt},
            {"roi", rect_json(c.roi)},
            {"birth_schedule", std::move(births)},
            {"death_schedule", std::move(deaths)},
            {"clutter_sources", std::move(sources)},
            {"uniform_clutter_rate", c.uniform_clutter_rate},
            {"detection_prob", c.detection_prob},
            {"meas_noise_cov", matrix(c.meas_noise_cov)},
            {"process_noise", c.process_noise},
            {"shape_dim", c.shape_dim},
            {"shape_noise", c.shape_noise},
            {"clutter_velocity_std", c.clutter_velocity_std},
            {"true_score", {c.true_score.alpha, c.true_score.beta}},
            {"clutter_score", {c.clutter_score.alpha, c.clutter_score.beta}},
            {"rng_seed", c.rng_seed}};
}

ScenarioConfig scenario_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("scenario config must be a JSON object");
    ScenarioConfig c;
    read_field(j, "n_frames", c.n_frames);
    read_field(j, "dt", c.dt);
    if (j.contains("roi")) c.roi = rect_from(j.at("roi"));
    read_field(j, "uniform_clutter_rate", c.uniform_clutter_rate);
    read_field(j, "detection_prob", c.detection_prob);
    if (j.contains("meas_noise_cov")) {
        const Eigen::MatrixXd r = matrix_from(j.at("meas_noise_cov"));
        if (r.rows() != 4 || r.cols() != 4) throw ConfigError("meas_noise_cov must be 4x4");
        c.meas_noise_cov = r;
    }
    read_field(j, "process_noise", c.process_noise);
    read_field(j, "shape_dim", c.shape_dim);
    read_field(j, "shape_noise", c.shape_noise);
    read_field(j, "clutter_velocity_std", c.clutter_velocity_std);
    read_field(j, "rng_seed", c.rng_seed);
    if (j.contains("true_score")) c.true_score = {get_number(j["true_score"][0]), get_number(j["true_score"][1])};
    if (j.contains("clutter_score")) {
        c.clutter_score = {get_number(j["clutter_score"][0]), get_number(j["clutter_score"][1])};
    }
    for (const auto& b : j.value("birth_schedule", json::array())) {
        BirthEvent e;
        e.frame = b.at("frame").get<int>();
        e.state = state_from(b.at("state"));
        if (b.contains("shape")) e.shape = vector_from(b.at("shape"));
        c.birth_schedule.push_back(std::move(e));
    }
    for (const auto& d : j.value("death_schedule", json::array())) {
        c.death_schedule.push_back({d.at("birth_index").get<int>(), d.at("frame").get<int>()});
    }
    for (const auto& s : j.value("clutter_sources", json::array())) {
        ClutterSource src;
        src.px = get_number(s.at("px"));
        src.py = get_number(s.at("py"));
        src.shape = vector_from(s.at("shape"));
        src.rate = get_number(s.at("rate"));
        src.spread = s.contains("spread") ? get_number(s.at("spread")) : 0.0;
        c.clutter_sources.push_back(std::move(src));
    }
    c.validate();
    return c;
}

json to_json(const ScenarioFamily& f) {
    return {{"n_frames", f.n_frames},
            {"dt", f.dt},
            {"roi", rect_json(f.roi)},
            {"min_objects", f.min_objects},
            {"max_objects", f.max_objects},
            {"min_speed", f.min_speed},
            {"max_speed", f.max_speed},
            {"birth_window", f.birth_window},
            {"n_clutter_sources", f.n_clutter_sources},
            {"clutter_source_rate", f.clutter_source_rate},
            {"clutter_source_spread", f.clutter_source_spread},
            {"n_clutter_prototypes", f.n_clutter_prototypes},
            {"prototype_noise", f.prototype_noise},
            {"uniform_clutter_rate", f.uniform_clutter_rate},
            {"detection_prob", f.detection_prob},
            {"process_noise", f.process_noise},
            {"shape_dim", f.shape_dim},
            {"shape_noise", f.shape_noise},
            {"family_seed", f.family_seed}};
}

ScenarioFamily scenario_family_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("scenario family must be a JSON object");
    ScenarioFamily f;
    read_field(j, "n_frames", f.n_frames);
    read_field(j, "dt", f.dt);
    if (j.contains("roi")) f.roi = rect_from(j.at("roi"));
    read_field(j, "min_objects", f.min_objects);
    read_field(j, "max_objects", f.max_objects);
    read_field(j, "min_speed", f.min_speed);
    read_field(j, "max_speed", f.max_speed);
    read_field(j, "birth_window", f.birth_window);
    read_field(j, "n_clutter_sources", f.n_clutter_sources);
    read_field(j, "clutter_source_rate", f.clutter_source_rate);
    read_field(j, "clutter_source_spread", f.clutter_source_spread);
    read_field(j, "n_clutter_prototypes", f.n_clutter_prototypes);
    read_field(j, "prototype_noise", f.prototype_noise);
    read_field(j, "uniform_clutter_rate", f.uniform_clutter_rate);
    read_field(j, "detection_prob", f.detection_prob);
    read_field(j, "process_noise", f.process_noise);
    read_field(j, "shape_dim", f.shape_dim);
    read_field(j, "shape_noise", f.shape_noise);
    read_field(j, "family_seed", f.family_seed);
    if (f.n_frames < 0 || f.min_objects < 0 || f.max_objects < f.min_objects || f.shape_dim <= 0) {
        throw ConfigError("invalid scenario family sizes");
    }
    return f;
}

json to_json(const Dataset& d) {
    json truth = json::array();
    for (const auto& frame : d.truth.frames) {
        json objs = json::array();
        for (const auto& o : frame) {
            objs.push_back({{"id", o.id.value}, {"state", state_json(o.state)}, {"shape", vector_json(o.shape)}});
        }
        truth.push_back(std::move(objs));
    }
    json frames = json::array();
    for (const auto& f : d.frames) {
        json meas = json::array();
        for (const auto& m : f.measurements) {
            meas.push_back({{"px", m.px}, {"py", m.py}, {"vx", m.vx}, {"vy", m.vy}, {"score", m.score},
                            {"shape", vector_json(m.shape)}, {"source", m.source}});
        }
        frames.push_back({{"frame", f.frame}, {"measurements", std::move(meas)}});
    }
    return {{"config", to_json(d.config)}, {"truth", std::move(truth)}, {"frames", std::move(frames)}};
}

Dataset dataset_from_json(const json& j) {
    Dataset d;
    d.config = scenario_config_from_json(j.at("config"));
    for (const auto& frame : j.at("truth")) {
        std::vector<TruthObject> objs;
        for (const auto& o : frame) {
            objs.push_back({TrackId{o.at("id").get<std::uint64_t>()}, state_from(o.at("state")),
                            vector_from(o.at("shape"))});
        }
        d.truth.frames.push_back(std::move(objs));
    }
    for (const auto& f : j.at("frames")) {
        MeasurementFrame mf;
        mf.frame = f.at("frame").get<int>();
        for (const auto& m : f.at("measurements")) {
            Measurement meas;
            meas.px = get_number(m.at("px"));
            meas.py = get_number(m.at("py"));
            meas.vx = get_number(m.at("vx"));
            meas.vy = get_number(m.at("vy"));
            meas.score = get_number(m.at("score"));
            meas.shape = vector_from(m.at("shape"));
            meas.source = m.value("source", std::int64_t{-1});
            meas.validate(d.config.shape_dim);
            mf.measurements.push_back(std::move(meas));
        }
        d.frames.push_back(std::move(mf));
    }
    if (d.frames.size() != d.truth.frames.size()) throw ConfigError("dataset truth and frames differ in length");
    return d;
}

std::string measurements_csv(const std::vector<MeasurementFrame>& frames) {
    std::string out = "frame,id,px,py,vx,vy,score";
    const Eigen::Index dim = [&] {
        for (const auto& f : frames) {
            if (!f.measurements.empty()) return f.measurements.front().shape.size();
        }
        return Eigen::Index{0};
    }();
    for (Eigen::Index k = 0; k < dim; ++k) out += ",shape_" + std::to_string(k);
    out += '\n';
    for (const auto& f : frames) {
        for (const auto& m : f.measurements) {
            out += std::to_string(f.frame) + ',' + std::to_string(m.source);
            for (double v : {m.px, m.py, m.vx, m.vy, m.score}) {
                out += ',';
                append_number(out, v);
            }
            for (Eigen::Index k = 0; k < m.shape.size(); ++k) {
                out += ',';
                append_number(out, m.shape(k));
            }
            out += '\n';
        }
    }
    return out;
}

std::string estimates_csv(const std::vector<std::vector<Estimate>>& frames) {
    std::string out = "frame,track_id,px,py,vx,vy,existence,score\n";
    for (std::size_t k = 0; k < frames.size(); ++k) {
        for (const auto& e : frames[k]) {
            out += std::to_string(k) + ',' + std::to_string(e.id.value);
            for (double v : {e.state.px, e.state.py, e.state.vx, e.state.vy, e.existence, e.score}) {
                out += ',';
                append_number(out, v);
            }
            out += '\n';
        }
    }
    return out;
}

std::vector<std::vector<Estimate>> estimates_from_csv(const std::string& text, std::size_t n_frames) {
    std::vector<std::vector<Estimate>> out(n_frames);
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line.rfind("frame,track_id", 0) != 0) throw ConfigError("missing estimates header");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 8) throw ConfigError("estimates row must have 8 fields");
        const auto k = static_cast<std::size_t>(std::stoull(f[0]));
        if (k >= n_frames) throw ConfigError("estimate frame index beyond the sequence");
        Estimate e;
        e.id = TrackId{std::stoull(f[1])};
        e.state = {parse_double(f[2]), parse_double(f[3]), parse_double(f[4]), parse_double(f[5])};
        e.existence = parse_double(f[6]);
        e.score = parse_double(f[7]);
        out[k].push_back(e);
    }
    return out;
}

json checkpoint_json(const NebpNetworks& nets, const Adam* adam) {
    json networks = json::object();
    const auto ptrs = nets.all();
    for (std::size_t k = 0; k < ptrs.size(); ++k) networks[NebpNetworks::names()[k]] = ptrs[k]->to_json(adam != nullptr);
    json j{{"format", "nebp-checkpoint"}, {"version", 1}, {"config", to_json(nets.config)}, {"networks", networks}};
    if (adam) {
        const auto& c = adam->config();
        j["adam"] = {{"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}, {"steps", adam->steps()}};
    }
    return j;
}

NebpNetworks networks_from_checkpoint(const json& j) {
    if (j.value("format", std::string()) != "nebp-checkpoint") throw ConfigError("not a checkpoint file");
    if (j.value("version", 0) != 1) throw ConfigError("unsupported checkpoint version");
    NebpNetworks nets;
    nets.config = nebp_config_from_json(j.at("config"));
    const auto ptrs = nets.all();
    try {
        for (std::size_t k = 0; k < ptrs.size(); ++k) {
            *ptrs[k] = Mlp::from_json(j.at("networks").at(NebpNetworks::names()[k]));
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("checkpoint: ") + e.what());
    }
    const NebpNetworks reference = NebpNetworks::create(nets.config);
    const auto expected = reference.all();
    for (std::size_t k = 0; k < ptrs.size(); ++k) {
        if (ptrs[k]->input_dim() != expected[k]->input_dim() || ptrs[k]->output_dim() != expected[k]->output_dim()) {
            throw ConfigError(std::string("checkpoint network '") + NebpNetworks::names()[k] +
                              "' does not match the configured sizes");
        }
    }
    return nets;
}

Adam adam_from_checkpoint(const json& j, const AdamConfig& fallback) {
    if (!j.contains("adam")) return Adam(fallback);
    const auto& a = j.at("adam");
    AdamConfig c;
    c.lr = get_number(a.at("lr"));
    c.beta1 = get_number(a.at("beta1"));
    c.beta2 = get_number(a.at("beta2"));
    c.eps = get_number(a.at("eps"));
    Adam adam(c);
    adam.set_steps(a.at("steps").get<long>());
    return adam;
}

json calibration_json(const Calibration& cal, const std::string& label) {
    return {{"classes", {{label, {{"temperature", number(cal.temperature)}, {"delta", cal.delta}}}}}};
}

Calibration calibration_from_json(const json& j, const std::string& label) {
    const json* entry = &j;
    if (j.contains("classes")) {
        const auto& classes = j.at("classes");
        if (!classes.contains(label)) throw ConfigError("calibration has no entry for class '" + label + "'");
        entry = &classes.at(label);
    }
    Calibration cal;
    cal.temperature = get_number(entry->at("temperature"));
    cal.delta = get_number(entry->at("delta"));
    if (!(cal.temperature > 0.0)) throw ConfigError("calibration temperature must be positive");
    return cal;
}

json to_json(const PotentialObject& po) {
    json particles = json::array();
    for (Eigen::Index p = 0; p < po.particles.cols(); ++p) {
        particles.push_back({po.particles(0, p), po.particles(1, p), po.particles(2, p), po.particles(3, p)});
    }
    return {{"id", po.id.value},
            {"kind", po.kind == PoKind::kLegacy ? "legacy" : "new"},
            {"existence", po.existence},
            {"score", po.score},
            {"mean", vector_json(po.mean())},
            {"weights", vector_json(po.weights)},
            {"particles", std::move(particles)},
            {"descriptor", vector_json(po.descriptor)}};
}

json tracker_snapshot(const TrackerState& s) {
    json objects = json::array();
    for (const auto& po : s.objects) objects.push_back(to_json(po));
    std::ostringstream rng;
    rng << s.rng;
    return {{"frame", s.frame}, {"next_id", s.next_id}, {"rng", rng.str()}, {"objects", std::move(objects)}};
}

json read_json_file(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << text;
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 14695981039346656037ULL;
    for (const unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace nebp
