#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "railplan/fractal.hpp"
#include "railplan/model.hpp"
#include "railplan/simulator.hpp"

// File formats: the dataset CSV (series_id, t, action, fractal_value), the
// versioned binary ensemble container, JSON parameter files, and the fractal
// CSVs. Ensemble payloads are raw little-endian 64-bit floats, so round trips
// are bit-exact.

namespace railplan {

// ---------------------------------------------------------------------------
// dataset CSV

inline void write_dataset_csv(const Dataset& ds, std::ostream& os) {
    os << "series_id,t,action,fractal_value\n";
    char buf[64];
    for (const auto& ser : ds.series) {
        for (std::size_t t = 0; t < ser.z.size(); ++t) {
            const int action = t == 0 ? -1 : ser.a[t - 1];
            std::snprintf(buf, sizeof(buf), "%.17g", ser.z[t]);
            os << ser.id << ',' << t << ',' << action << ',' << buf << '\n';
        }
    }
}

inline void write_dataset_csv(const Dataset& ds, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    write_dataset_csv(ds, os);
}

inline Dataset read_dataset_csv(std::istream& is, const std::string& name = "<stream>") {
    Dataset ds;
    std::string line;
    std::size_t lineno = 0;
    Dataset::Series* cur = nullptr;
    long expected_t = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (lineno == 1 && line.rfind("series_id", 0) == 0) continue;
        std::istringstream ss(line);
        std::string id, t_str, a_str, z_str;
        if (!std::getline(ss, id, ',') || !std::getline(ss, t_str, ',') ||
            !std::getline(ss, a_str, ',') || !std::getline(ss, z_str))
            throw std::runtime_error(name + ":" + std::to_string(lineno) + ": expected 4 columns");
        long t;
        int a;
        double z;
        try {
            t = std::stol(t_str);
            a = std::stoi(a_str);
            z = std::stod(z_str);
        } catch (const std::exception&) {
            throw std::runtime_error(name + ":" + std::to_string(lineno) + ": unparsable value");
        }
        if (cur == nullptr || cur->id != id) {
            ds.series.emplace_back();
            cur = &ds.series.back();
            cur->id = id;
            expected_t = 0;
        }
        if (t != expected_t)
            throw std::runtime_error(name + ":" + std::to_string(lineno) +
                                     ": time index out of order for series " + id);
        if (t == 0) {
            if (a != -1)
                throw std::runtime_error(name + ":" + std::to_string(lineno) +
                                         ": first row of a series must have action -1");
        } else {
            if (a < 0)
                throw std::runtime_error(name + ":" + std::to_string(lineno) +
                                         ": action must be >= 0 after t=0");
            cur->a.push_back(a);
        }
        if (z > 0.0)
            throw std::runtime_error(name + ":" + std::to_string(lineno) +
                                     ": fractal values must be <= 0");
        cur->z.push_back(z);
        ++expected_t;
    }
    return ds;
}

inline Dataset read_dataset_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    return read_dataset_csv(is, path);
}

// ---------------------------------------------------------------------------
// ensemble binary container

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    std::array<unsigned char, 4> b{};
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b.data()), 4);
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
    std::array<unsigned char, 8> b{};
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b.data()), 8);
}
inline void put_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(os, bits);
}
inline std::uint32_t get_u32(std::istream& is) {
    std::array<unsigned char, 4> b{};
    is.read(reinterpret_cast<char*>(b.data()), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}
inline std::uint64_t get_u64(std::istream& is) {
    std::array<unsigned char, 8> b{};
    is.read(reinterpret_cast<char*>(b.data()), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}
inline double get_f64(std::istream& is) {
    const std::uint64_t bits = get_u64(is);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

inline void put_vec(std::ostream& os, const std::vector<double>& v) {
    for (double x : v) put_f64(os, x);
}
inline void get_vec(std::istream& is, std::vector<double>& v) {
    for (double& x : v) x = get_f64(is);
}

} // namespace detail

inline constexpr char kEnsembleMagic[4] = {'R', 'P', 'E', 'N'};
inline constexpr std::uint32_t kEnsembleVersion = 1;

inline void write_ensemble(const PosteriorEnsemble& ens, std::ostream& os) {
    if (ens.samples.empty()) throw std::invalid_argument("write_ensemble: empty ensemble");
    const int S = ens.samples.front().transitions.n_states;
    const int A = ens.samples.front().transitions.n_actions;
    os.write(kEnsembleMagic, 4);
    detail::put_u32(os, kEnsembleVersion);
    detail::put_u32(os, static_cast<std::uint32_t>(S));
    detail::put_u32(os, static_cast<std::uint32_t>(A));
    detail::put_u64(os, ens.samples.size());
    detail::put_u32(os, static_cast<std::uint32_t>(ens.chain_meta.seeds.size()));
    for (std::size_t c = 0; c < ens.chain_meta.seeds.size(); ++c) {
        detail::put_u64(os, ens.chain_meta.seeds[c]);
        detail::put_u32(os, ens.chain_meta.lengths[c]);
    }
    for (const auto& s : ens.samples) {
        if (s.transitions.n_states != S || s.transitions.n_actions != A)
            throw std::invalid_argument("write_ensemble: inconsistent sample dimensions");
        detail::put_vec(os, s.transitions.initial);
        detail::put_vec(os, s.transitions.prob);
        detail::put_vec(os, s.obs.mu_d);
        detail::put_vec(os, s.obs.sigma_d);
        detail::put_vec(os, s.obs.nu_d);
        detail::put_vec(os, s.obs.mu_r);
        detail::put_vec(os, s.obs.sigma_r);
        detail::put_vec(os, s.obs.nu_r);
        detail::put_vec(os, s.obs.mu_0);
        detail::put_vec(os, s.obs.sigma_0);
        detail::put_vec(os, s.obs.nu_0);
        detail::put_vec(os, s.obs.k_r);
        detail::put_f64(os, s.log_post);
    }
}

inline void write_ensemble(const PosteriorEnsemble& ens, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    write_ensemble(ens, os);
}

inline PosteriorEnsemble read_ensemble(std::istream& is, const std::string& name = "<stream>") {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kEnsembleMagic, 4) != 0)
        throw std::runtime_error(name + ": not an ensemble file");
    const std::uint32_t version = detail::get_u32(is);
    if (version != kEnsembleVersion)
        throw std::runtime_error(name + ": unsupported ensemble version " + std::to_string(version));
    const int S = static_cast<int>(detail::get_u32(is));
    const int A = static_cast<int>(detail::get_u32(is));
    const std::uint64_t n = detail::get_u64(is);
    const std::uint32_t n_chains = detail::get_u32(is);
    PosteriorEnsemble ens;
    for (std::uint32_t c = 0; c < n_chains; ++c) {
        ens.chain_meta.seeds.push_back(detail::get_u64(is));
        ens.chain_meta.lengths.push_back(detail::get_u32(is));
    }
    ens.samples.resize(n);
    for (auto& s : ens.samples) {
        s.transitions = TransitionSet(S, A);
        s.obs = ObservationParams::zeros(S, A);
        detail::get_vec(is, s.transitions.initial);
        detail::get_vec(is, s.transitions.prob);
        detail::get_vec(is, s.obs.mu_d);
        detail::get_vec(is, s.obs.sigma_d);
        detail::get_vec(is, s.obs.nu_d);
        detail::get_vec(is, s.obs.mu_r);
        detail::get_vec(is, s.obs.sigma_r);
        detail::get_vec(is, s.obs.nu_r);
        detail::get_vec(is, s.obs.mu_0);
        detail::get_vec(is, s.obs.sigma_0);
        detail::get_vec(is, s.obs.nu_0);
        detail::get_vec(is, s.obs.k_r);
        s.log_post = detail::get_f64(is);
        if (!is) throw std::runtime_error(name + ": truncated ensemble file");
    }
    return ens;
}

inline PosteriorEnsemble read_ensemble(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    return read_ensemble(is, path);
}

// ---------------------------------------------------------------------------
// model sample JSON

inline nlohmann::json sample_to_json(const ModelSample& s) {
    const int S = s.transitions.n_states;
    const int A = s.transitions.n_actions;
    nlohmann::json j;
    j["n_states"] = S;
    j["n_actions"] = A;
    j["initial"] = s.transitions.initial;
    nlohmann::json mats = nlohmann::json::array();
    for (int a = 0; a < A; ++a) {
        nlohmann::json mat = nlohmann::json::array();
        for (int st = 0; st < S; ++st) {
            const auto row = s.transitions.row(a, st);
            mat.push_back(std::vector<double>(row.begin(), row.end()));
        }
        mats.push_back(mat);
    }
    j["transitions"] = mats;
    j["obs"] = {{"mu_d", s.obs.mu_d},       {"sigma_d", s.obs.sigma_d}, {"nu_d", s.obs.nu_d},
                {"mu_r", s.obs.mu_r},       {"sigma_r", s.obs.sigma_r}, {"nu_r", s.obs.nu_r},
                {"mu_0", s.obs.mu_0},       {"sigma_0", s.obs.sigma_0}, {"nu_0", s.obs.nu_0},
                {"k_r", s.obs.k_r}};
    if (std::isfinite(s.log_post)) j["log_post"] = s.log_post;
    return j;
}

inline ModelSample sample_from_json(const nlohmann::json& j) {
    const int S = j.at("n_states").get<int>();
    const int A = j.at("n_actions").get<int>();
    ModelSample s;
    s.transitions = TransitionSet(S, A);
    s.transitions.initial = j.at("initial").get<std::vector<double>>();
    const auto& mats = j.at("transitions");
    for (int a = 0; a < A; ++a)
        for (int st = 0; st < S; ++st) {
            const auto row = mats.at(a).at(st).get<std::vector<double>>();
            for (int s2 = 0; s2 < S; ++s2) s.transitions.at(a, st, s2) = row.at(s2);
        }
    const auto& o = j.at("obs");
    s.obs.mu_d = o.at("mu_d").get<std::vector<double>>();
    s.obs.sigma_d = o.at("sigma_d").get<std::vector<double>>();
    s.obs.nu_d = o.at("nu_d").get<std::vector<double>>();
    s.obs.mu_r = o.at("mu_r").get<std::vector<double>>();
    s.obs.sigma_r = o.at("sigma_r").get<std::vector<double>>();
    s.obs.nu_r = o.at("nu_r").get<std::vector<double>>();
    s.obs.mu_0 = o.at("mu_0").get<std::vector<double>>();
    s.obs.sigma_0 = o.at("sigma_0").get<std::vector<double>>();
    s.obs.nu_0 = o.at("nu_0").get<std::vector<double>>();
    s.obs.k_r = o.at("k_r").get<std::vector<double>>();
    if (j.contains("log_post")) s.log_post = j.at("log_post").get<double>();
    return s;
}

inline ModelSample read_sample_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    nlohmann::json j;
    is >> j;
    return sample_from_json(j);
}

// ---------------------------------------------------------------------------
// prior configuration JSON

inline nlohmann::json priors_to_json(const PriorConfig& p) {
    nlohmann::json j;
    j["alpha0"] = p.alpha0;
    j["alphaT"] = p.alphaT;
    j["mu_d"] = {{"mean", p.mu_d.mean}, {"sd", p.mu_d.sd}};
    j["sigma_d"] = {{"mean", p.sigma_d.mean}, {"sd", p.sigma_d.sd}};
    j["nu_d"] = {{"shape", p.nu_d.shape}, {"rate", p.nu_d.rate}};
    j["mu_r"] = {{"mean", p.mu_r.mean}, {"sd", p.mu_r.sd}};
    j["sigma_r"] = {{"mean", p.sigma_r.mean}, {"sd", p.sigma_r.sd}};
    j["nu_r"] = {{"shape", p.nu_r.shape}, {"rate", p.nu_r.rate}};
    j["mu_0"] = {{"mean", p.mu_0.mean}, {"sd", p.mu_0.sd}};
    j["sigma_0"] = {{"mean", p.sigma_0.mean}, {"sd", p.sigma_0.sd}};
    j["nu_0"] = {{"shape", p.nu_0.shape}, {"rate", p.nu_0.rate}};
    j["k_r"] = {{"a", p.k_r.a}, {"b", p.k_r.b}};
    return j;
}

inline PriorConfig priors_from_json(const nlohmann::json& j) {
    PriorConfig p;
    p.alpha0 = j.at("alpha0").get<std::vector<double>>();
    p.alphaT = j.at("alphaT").get<std::vector<std::vector<double>>>();
    const int S = p.n_states();
    for (const auto& row : p.alphaT)
        if (row.size() != static_cast<std::size_t>(S) * S)
            throw std::runtime_error("priors: alphaT rows must hold S*S concentrations");
    auto gauss = [&](const char* key, GaussPrior& out) {
        out.mean = j.at(key).at("mean").get<double>();
        out.sd = j.at(key).at("sd").get<double>();
    };
    auto tgauss = [&](const char* key, TruncGaussPrior& out) {
        out.mean = j.at(key).at("mean").get<double>();
        out.sd = j.at(key).at("sd").get<double>();
    };
    auto gammap = [&](const char* key, GammaPrior& out) {
        out.shape = j.at(key).at("shape").get<double>();
        out.rate = j.at(key).at("rate").get<double>();
    };
    gauss("mu_d", p.mu_d);
    tgauss("sigma_d", p.sigma_d);
    gammap("nu_d", p.nu_d);
    tgauss("mu_r", p.mu_r);
    tgauss("sigma_r", p.sigma_r);
    gammap("nu_r", p.nu_r);
    tgauss("mu_0", p.mu_0);
    tgauss("sigma_0", p.sigma_0);
    gammap("nu_0", p.nu_0);
    p.k_r.a = j.at("k_r").at("a").get<double>();
    p.k_r.b = j.at("k_r").at("b").get<double>();
    return p;
}

inline PriorConfig read_priors_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    nlohmann::json j;
    is >> j;
    return priors_from_json(j);
}

inline void write_sample_json(const ModelSample& s, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << sample_to_json(s).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// fractal CSVs

inline LevelSignal read_level_csv(std::istream& is, const std::string& name = "<stream>") {
    LevelSignal sig;
    std::string line;
    std::size_t lineno = 0;
    std::vector<double> pos;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (lineno == 1 && line.rfind("position_m", 0) == 0) continue;
        std::istringstream ss(line);
        std::string p_str, l_str;
        if (!std::getline(ss, p_str, ',') || !std::getline(ss, l_str))
            throw std::runtime_error(name + ":" + std::to_string(lineno) + ": expected 2 columns");
        try {
            pos.push_back(std::stod(p_str));
            sig.samples.push_back(std::stod(l_str));
        } catch (const std::exception&) {
            throw std::runtime_error(name + ":" + std::to_string(lineno) + ": unparsable value");
        }
    }
    if (pos.size() < 2) throw std::runtime_error(name + ": need at least 2 rows");
    sig.spacing = pos[1] - pos[0];
    if (!(sig.spacing > 0.0)) throw std::runtime_error(name + ": positions must increase");
    for (std::size_t i = 1; i < pos.size(); ++i)
        if (std::fabs(pos[i] - pos[i - 1] - sig.spacing) > 1e-6 * sig.spacing)
            throw std::runtime_error(name + ":" + std::to_string(i + 2) + ": non-uniform spacing");
    return sig;
}

inline LevelSignal read_level_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    return read_level_csv(is, path);
}

inline void write_fractal_csv(const std::vector<FractalTriple>& triples, std::ostream& os) {
    os << "window_start_m,fv_short,fv_mid,fv_long\n";
    char buf[128];
    for (const auto& t : triples) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g\n", t.window_start, t.short_wave,
                      t.mid_wave, t.long_wave);
        os << buf;
    }
}

inline void write_fractal_csv(const std::vector<FractalTriple>& triples, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    write_fractal_csv(triples, os);
}

} // namespace railplan
