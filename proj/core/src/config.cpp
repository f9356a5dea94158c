#include "hyda/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "hyda/rng.hpp"

namespace hyda {

std::string to_string(Backend b) { return b == Backend::hypergraph ? "hypergraph" : "graph"; }

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::disc_only: return "disc_only";
        case Ablation::hg_only: return "hg_only";
        case Ablation::avg_heads: return "avg_heads";
        case Ablation::full_hyda: return "full_hyda";
    }
    return "?";
}

Backend backend_from_string(const std::string& s) {
    if (s == "hypergraph") return Backend::hypergraph;
    if (s == "graph") return Backend::graph;
    throw ConfigError("unknown backend '" + s + "' (expected hypergraph|graph)");
}

Ablation ablation_from_string(const std::string& s) {
    if (s == "disc_only") return Ablation::disc_only;
    if (s == "hg_only") return Ablation::hg_only;
    if (s == "avg_heads") return Ablation::avg_heads;
    if (s == "full_hyda") return Ablation::full_hyda;
    throw ConfigError("unknown ablation '" + s +
                      "' (expected disc_only|hg_only|avg_heads|full_hyda)");
}

namespace {

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += v[i];
    }
    return out;
}

}  // namespace

std::string RunConfig::canonical() const {
    std::ostringstream os;
    os << "k=" << k << "\nC=" << C << "\nC_hid=" << C_hid << "\nC_out=" << C_out
       << "\nC_res=" << C_res << "\nlr=" << fmt_double(lr)
       << "\nweight_decay_hg=" << fmt_double(weight_decay_hg)
       << "\ndropout_p=" << fmt_double(dropout_p) << "\nbatch_size=" << batch_size
       << "\nepochs=" << epochs << "\nfolds=" << folds
       << "\nfocal_gamma=" << fmt_double(focal_gamma) << "\nfocal_alpha=";
    for (size_t i = 0; i < focal_alpha.size(); ++i) {
        if (i) os << ",";
        os << fmt_double(focal_alpha[i]);
    }
    os << "\nseed=" << seed << "\nmodalities=" << join(modalities)
       << "\nbackend=" << to_string(backend) << "\nablation=" << to_string(ablation);
    if (schedule) {
        os << "\nschedule.warmup_epochs=" << schedule->warmup_epochs
           << "\nschedule.decay_epoch=" << schedule->decay_epoch
           << "\nschedule.decay_gamma=" << fmt_double(schedule->decay_gamma)
           << "\nschedule.early_stop_patience=" << schedule->early_stop_patience;
    }
    os << "\n";
    return os.str();
}

uint64_t RunConfig::fingerprint() const {
    const std::string c = canonical();
    return fnv1a64(c.data(), c.size());
}

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

int64_t parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const int64_t r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': invalid integer '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': invalid number '" + v + "'");
    }
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(v);
    while (std::getline(is, cur, ',')) {
        cur = trim(cur);
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    ScheduleConfig sched;
    bool has_schedule = false;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": expected 'key = value', got '" + line + "'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "k") cfg.k = parse_int(key, val);
        else if (key == "C") cfg.C = parse_int(key, val);
        else if (key == "C_hid") cfg.C_hid = parse_int(key, val);
        else if (key == "C_out") cfg.C_out = parse_int(key, val);
        else if (key == "C_res") cfg.C_res = parse_int(key, val);
        else if (key == "lr") cfg.lr = parse_double(key, val);
        else if (key == "weight_decay_hg") cfg.weight_decay_hg = parse_double(key, val);
        else if (key == "dropout_p") cfg.dropout_p = parse_double(key, val);
        else if (key == "batch_size") cfg.batch_size = parse_int(key, val);
        else if (key == "epochs") cfg.epochs = parse_int(key, val);
        else if (key == "folds") cfg.folds = parse_int(key, val);
        else if (key == "focal_gamma") cfg.focal_gamma = parse_double(key, val);
        else if (key == "focal_alpha") {
            if (val != "uniform") {
                for (const auto& a : split_list(val))
                    cfg.focal_alpha.push_back(parse_double(key, a));
            }
        } else if (key == "seed") cfg.seed = static_cast<uint64_t>(parse_int(key, val));
        else if (key == "modalities") {
            if (val != "all") cfg.modalities = split_list(val);
        } else if (key == "backend") cfg.backend = backend_from_string(val);
        else if (key == "ablation") cfg.ablation = ablation_from_string(val);
        else if (key == "schedule.warmup_epochs") { sched.warmup_epochs = parse_int(key, val); has_schedule = true; }
        else if (key == "schedule.decay_epoch") { sched.decay_epoch = parse_int(key, val); has_schedule = true; }
        else if (key == "schedule.decay_gamma") { sched.decay_gamma = parse_double(key, val); has_schedule = true; }
        else if (key == "schedule.early_stop_patience") { sched.early_stop_patience = parse_int(key, val); has_schedule = true; }
        else {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": unknown config key '" +
                              key + "'");
        }
    }
    if (has_schedule) cfg.schedule = sched;
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

std::vector<ModalityDesc> select_modalities(const RunConfig& cfg, const CohortDataset& ds) {
    if (cfg.modalities.empty()) return ds.modalities;
    std::vector<ModalityDesc> out;
    for (const auto& m : ds.modalities) {
        if (std::find(cfg.modalities.begin(), cfg.modalities.end(), m.name) !=
            cfg.modalities.end()) {
            out.push_back(m);
        }
    }
    for (const auto& want : cfg.modalities) {
        if (!ds.find_modality(want)) {
            throw ConfigError("modality subset names unknown modality '" + want + "'");
        }
    }
    if (out.empty()) throw ConfigError("modality subset selects nothing");
    return out;
}

void validate_config(const RunConfig& cfg, const CohortDataset& ds) {
    if (cfg.k < 1) throw ConfigError("k must be >= 1");
    if (cfg.k > cfg.batch_size) {
        throw ConfigError("k=" + std::to_string(cfg.k) + " exceeds batch_size=" +
                          std::to_string(cfg.batch_size));
    }
    if (cfg.folds < 2) throw ConfigError("folds must be >= 2");
    if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(cfg.dropout_p >= 0.0 && cfg.dropout_p < 1.0)) {
        throw ConfigError("dropout_p must lie in [0,1)");
    }
    if (cfg.focal_gamma < 0.0) throw ConfigError("focal_gamma must be >= 0");
    if (!cfg.focal_alpha.empty() &&
        static_cast<int64_t>(cfg.focal_alpha.size()) != ds.num_classes) {
        throw ConfigError("focal_alpha needs one weight per class");
    }

    const auto selected = select_modalities(cfg, ds);
    int64_t emb = -1;
    bool any_imaging = false;
    for (const auto& m : selected) {
        if (m.kind != ModalityKind::imaging) continue;
        any_imaging = true;
        if (emb == -1) emb = m.emb_dim;
        if (m.emb_dim != emb) {
            throw ConfigError("imaging modalities must share emb_dim; got " +
                              std::to_string(emb) + " and " + std::to_string(m.emb_dim));
        }
        if (m.map_shape[1] != cfg.C_hid) {
            throw ConfigError("config C_hid=" + std::to_string(cfg.C_hid) +
                              " does not match feature-map channels " +
                              std::to_string(m.map_shape[1]) + " of " + m.name);
        }
        const int64_t vol = m.map_shape[2] * m.map_shape[3] * m.map_shape[4];
        const int64_t want_res = m.emb_dim / vol;
        if (want_res * vol != m.emb_dim) {
            throw ConfigError("emb_dim " + std::to_string(m.emb_dim) +
                              " is not divisible by D*H*W=" + std::to_string(vol));
        }
        if (cfg.C_res != 0 && cfg.C_res != want_res) {
            throw ConfigError("C_res=" + std::to_string(cfg.C_res) + " but E/(D*H*W)=" +
                              std::to_string(want_res));
        }
    }
    if (cfg.ablation == Ablation::full_hyda) {
        if (cfg.C % 27 != 0) {
            throw ConfigError("C=" + std::to_string(cfg.C) +
                              " must be divisible by 27 for the fusion path");
        }
        if (!any_imaging) {
            throw ConfigError("full_hyda requires at least one imaging modality");
        }
    }
    if (cfg.schedule) {
        if (cfg.schedule->warmup_epochs < 0) throw ConfigError("schedule.warmup_epochs must be >= 0");
        if (cfg.schedule->decay_gamma <= 0.0) throw ConfigError("schedule.decay_gamma must be > 0");
    }
}

}  // namespace hyda
