#include "stvs/scnio.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace stvs::io {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Record {
    std::string section;  // empty for top-level keys
    int line = 0;
    std::map<std::string, std::pair<std::string, int>> kv;  // key -> (value, line)
};

struct ParsedFile {
    std::string magic;
    int version = 0;
    std::vector<Record> records;  // records[0] holds top-level keys
};

ParsedFile tokenize(std::istream& in, const std::string& origin, std::vector<std::string>& errors) {
    ParsedFile out;
    out.records.push_back(Record{});

    std::string raw;
    int lineno = 0;
    bool saw_magic = false;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = raw;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;

        if (!saw_magic) {
            std::istringstream head(line);
            head >> out.magic >> out.version;
            if (out.magic.empty() || out.version <= 0) {
                errors.push_back(origin + ":" + std::to_string(lineno) +
                                 ": expected '<magic> <version>' header");
            }
            saw_magic = true;
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') {
                errors.push_back(origin + ":" + std::to_string(lineno) + ": unterminated section");
                continue;
            }
            Record rec;
            rec.section = trim(line.substr(1, line.size() - 2));
            rec.line = lineno;
            out.records.push_back(std::move(rec));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            errors.push_back(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
            continue;
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto& rec = out.records.back();
        if (!rec.kv.emplace(key, std::make_pair(value, lineno)).second) {
            errors.push_back(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key +
                             "'");
        }
    }
    if (!saw_magic) errors.push_back(origin + ": empty file");
    return out;
}

// Field extraction with error accumulation.
class Fields {
public:
    Fields(const Record& rec, const std::string& origin, std::vector<std::string>& errors)
        : rec_(rec), origin_(origin), errors_(errors) {}

    bool has(const std::string& key) const { return rec_.kv.count(key) > 0; }

    std::string str(const std::string& key, const std::string& fallback = "",
                    bool required = false) {
        mark(key);
        auto it = rec_.kv.find(key);
        if (it == rec_.kv.end()) {
            if (required) missing(key);
            return fallback;
        }
        return it->second.first;
    }

    double num(const std::string& key, double fallback = 0.0, bool required = false) {
        mark(key);
        auto it = rec_.kv.find(key);
        if (it == rec_.kv.end()) {
            if (required) missing(key);
            return fallback;
        }
        try {
            std::size_t used = 0;
            const double v = std::stod(it->second.first, &used);
            if (used != it->second.first.size()) throw std::invalid_argument("trailing chars");
            return v;
        } catch (const std::exception&) {
            errors_.push_back(where(it->second.second) + ": '" + key + "' is not a number (got '" +
                              it->second.first + "')");
            return fallback;
        }
    }

    int integer(const std::string& key, int fallback = 0, bool required = false) {
        const double v = num(key, fallback, required);
        return static_cast<int>(v);
    }

    bool boolean(const std::string& key, bool fallback = false) {
        mark(key);
        auto it = rec_.kv.find(key);
        if (it == rec_.kv.end()) return fallback;
        const std::string& v = it->second.first;
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        errors_.push_back(where(it->second.second) + ": '" + key + "' must be true/false");
        return fallback;
    }

    void finish() {
        for (const auto& [key, val] : rec_.kv) {
            if (!seen_.count(key)) {
                errors_.push_back(where(val.second) + ": unknown key '" + key + "' in [" +
                                  rec_.section + "]");
            }
        }
    }

private:
    void mark(const std::string& key) { seen_.insert(key); }
    void missing(const std::string& key) {
        errors_.push_back(where(rec_.line) + ": [" + rec_.section + "] is missing required key '" +
                          key + "'");
    }
    std::string where(int line) const { return origin_ + ":" + std::to_string(line); }

    const Record& rec_;
    const std::string& origin_;
    std::vector<std::string>& errors_;
    std::set<std::string> seen_;
};

}  // namespace

GridScenario parse_scenario(std::istream& in, const std::string& origin) {
    std::vector<std::string> errors;
    ParsedFile file = tokenize(in, origin, errors);
    if (!errors.empty() && file.magic.empty()) {
        throw ValidationError("cannot parse " + origin, errors);
    }
    if (file.magic != "stvs-scenario") {
        errors.push_back(origin + ": expected magic 'stvs-scenario', got '" + file.magic + "'");
        throw ValidationError("cannot parse " + origin, errors);
    }
    if (file.version != 1) {
        errors.push_back(origin + ": unsupported schema version " + std::to_string(file.version));
        throw ValidationError("cannot parse " + origin, errors);
    }

    GridScenario sc;
    bool saw_limits = false, saw_sim = false, saw_opt = false;

    for (std::size_t r = 0; r < file.records.size(); ++r) {
        const Record& rec = file.records[r];
        Fields f(rec, origin, errors);
        if (rec.section.empty()) {
            sc.name = f.str("name", "", /*required=*/r == 0);
        } else if (rec.section == "bus") {
            Bus b;
            b.id = f.integer("id", 0, true);
            b.base_kv = f.num("base_kv", 230.0);
            b.is_monitored = f.boolean("monitored", false);
            sc.buses.push_back(b);
        } else if (rec.section == "line") {
            Line l;
            l.from = f.integer("from", 0, true);
            l.to = f.integer("to", 0, true);
            l.r = f.num("r", 0.0);
            l.x = f.num("x", 0.0, true);
            l.b_sh = f.num("b_sh", 0.0);
            sc.lines.push_back(l);
        } else if (rec.section == "load") {
            LoadZ l;
            l.bus = f.integer("bus", 0, true);
            l.p = f.num("p", 0.0, true);
            l.q = f.num("q", 0.0);
            sc.loads.push_back(l);
        } else if (rec.section == "gfl") {
            GflDevice d;
            d.bus = f.integer("bus", 0, true);
            d.p_sp = f.num("p_sp", 0.0, true);
            d.q_sp = f.num("q_sp", 0.0);
            d.i_max = f.num("i_max", 1.2);
            d.b_virtual = f.num("b_virtual", 0.0);
            d.pll_kp = f.num("pll_kp", 50.0);
            d.pll_ki = f.num("pll_ki", 900.0);
            d.outer_kp = f.num("outer_kp", 0.2);
            d.outer_ki = f.num("outer_ki", 10.0);
            d.i_track_tau = f.num("i_track_tau", 2e-3);
            d.k_q = f.num("k_q", 2.0);
            sc.gfl_devices.push_back(d);
        } else if (rec.section == "gfm") {
            GfmDevice d;
            d.bus = f.integer("bus", 0, true);
            d.p_sp = f.num("p_sp", 0.0, true);
            d.q_sp = f.num("q_sp", 0.0);
            d.e0 = f.num("e0", 1.0);
            d.m_p = f.num("m_p", 0.05);
            d.n_q = f.num("n_q", 0.05);
            d.i_max = f.num("i_max", 1.2);
            d.x_virtual = f.num("x_virtual", 0.3);
            sc.gfm_devices.push_back(d);
        } else if (rec.section == "fault") {
            FaultSpec fs;
            fs.id = f.str("id", "", true);
            fs.bus = f.integer("bus", 0, true);
            fs.r_f = f.num("r_f", 0.0);
            fs.x_f = f.num("x_f", 0.01);
            fs.t_fault = f.num("t_fault", 0.5);
            fs.t_clear = f.num("t_clear", 0.7);
            sc.faults.push_back(fs);
        } else if (rec.section == "limits") {
            if (saw_limits) errors.push_back(origin + ": duplicate [limits] section");
            saw_limits = true;
            sc.limits.v_lvrt_th = f.num("v_lvrt", 0.2);
            sc.limits.v_hvrt_th = f.num("v_hvrt", 1.2);
        } else if (rec.section == "sim") {
            if (saw_sim) errors.push_back(origin + ": duplicate [sim] section");
            saw_sim = true;
            sc.sim.dt = f.num("dt", 1e-4);
            sc.sim.t_end = f.num("t_end", 1.5);
            const std::string integ = f.str("integration", "rk4");
            if (integ == "rk4") {
                sc.sim.integration = Integration::FixedStepRk4;
            } else if (integ == "trapezoidal") {
                sc.sim.integration = Integration::Trapezoidal;
            } else {
                errors.push_back(origin + ": sim.integration must be rk4 or trapezoidal");
            }
            sc.sim.detection_tau = f.num("detection_tau", 0.02);
            sc.sim.record_decimation = f.integer("record_decimation", 1);
        } else if (rec.section == "opt") {
            if (saw_opt) errors.push_back(origin + ": duplicate [opt] section");
            saw_opt = true;
            const std::string vref = f.str("v_ref", "prefault");
            if (vref != "prefault") {
                try {
                    sc.opt.v_ref = std::stod(vref);
                } catch (const std::exception&) {
                    errors.push_back(origin + ": opt.v_ref must be 'prefault' or a number");
                }
            }
            sc.opt.w_tau1 = f.num("w_tau1", 1.0);
            sc.opt.w_tau2 = f.num("w_tau2", 1.0);
            sc.opt.w_tau3 = f.num("w_tau3", 1.0);
            sc.opt.x_virtual_min = f.num("x_virtual_min", 0.05);
            sc.opt.x_virtual_max = f.num("x_virtual_max", 1.0);
            sc.opt.b_virtual_max = f.num("b_virtual_max", 20.0);
            const std::string sharing = f.str("preset_sharing", "per_fault");
            if (sharing == "per_fault") {
                sc.opt.preset_sharing = PresetSharing::PerFault;
            } else if (sharing == "shared") {
                sc.opt.preset_sharing = PresetSharing::Shared;
            } else {
                errors.push_back(origin + ": opt.preset_sharing must be per_fault or shared");
            }
            sc.opt.multistart = f.integer("multistart", 3);
            sc.opt.max_iterations = f.integer("max_iterations", 300);
        } else {
            errors.push_back(origin + ":" + std::to_string(rec.line) + ": unknown section [" +
                             rec.section + "]");
            continue;
        }
        f.finish();
    }

    for (auto& e : sc.validate()) errors.push_back(origin + ": " + e);
    if (!errors.empty()) {
        throw ValidationError("scenario '" + origin + "' failed validation", errors);
    }
    return sc;
}

GridScenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open scenario file '" + path + "'");
    return parse_scenario(in, path);
}

std::string format_scenario(const GridScenario& sc) {
    std::ostringstream os;
    os << "stvs-scenario 1\n\nname = " << sc.name << "\n";
    for (const auto& b : sc.buses) {
        os << "\n[bus]\nid = " << b.id << "\nbase_kv = " << fmt_double(b.base_kv)
           << "\nmonitored = " << (b.is_monitored ? "true" : "false") << "\n";
    }
    for (const auto& l : sc.lines) {
        os << "\n[line]\nfrom = " << l.from << "\nto = " << l.to << "\nr = " << fmt_double(l.r)
           << "\nx = " << fmt_double(l.x) << "\nb_sh = " << fmt_double(l.b_sh) << "\n";
    }
    for (const auto& l : sc.loads) {
        os << "\n[load]\nbus = " << l.bus << "\np = " << fmt_double(l.p)
           << "\nq = " << fmt_double(l.q) << "\n";
    }
    for (const auto& d : sc.gfm_devices) {
        os << "\n[gfm]\nbus = " << d.bus << "\np_sp = " << fmt_double(d.p_sp)
           << "\nq_sp = " << fmt_double(d.q_sp) << "\ne0 = " << fmt_double(d.e0)
           << "\nm_p = " << fmt_double(d.m_p) << "\nn_q = " << fmt_double(d.n_q)
           << "\ni_max = " << fmt_double(d.i_max) << "\nx_virtual = " << fmt_double(d.x_virtual)
           << "\n";
    }
    for (const auto& d : sc.gfl_devices) {
        os << "\n[gfl]\nbus = " << d.bus << "\np_sp = " << fmt_double(d.p_sp)
           << "\nq_sp = " << fmt_double(d.q_sp) << "\ni_max = " << fmt_double(d.i_max)
           << "\nb_virtual = " << fmt_double(d.b_virtual) << "\npll_kp = " << fmt_double(d.pll_kp)
           << "\npll_ki = " << fmt_double(d.pll_ki) << "\nouter_kp = " << fmt_double(d.outer_kp)
           << "\nouter_ki = " << fmt_double(d.outer_ki)
           << "\ni_track_tau = " << fmt_double(d.i_track_tau) << "\nk_q = " << fmt_double(d.k_q)
           << "\n";
    }
    for (const auto& fs : sc.faults) {
        os << "\n[fault]\nid = " << fs.id << "\nbus = " << fs.bus << "\nr_f = " << fmt_double(fs.r_f)
           << "\nx_f = " << fmt_double(fs.x_f) << "\nt_fault = " << fmt_double(fs.t_fault)
           << "\nt_clear = " << fmt_double(fs.t_clear) << "\n";
    }
    os << "\n[limits]\nv_lvrt = " << fmt_double(sc.limits.v_lvrt_th)
       << "\nv_hvrt = " << fmt_double(sc.limits.v_hvrt_th) << "\n";
    os << "\n[sim]\ndt = " << fmt_double(sc.sim.dt) << "\nt_end = " << fmt_double(sc.sim.t_end)
       << "\nintegration = "
       << (sc.sim.integration == Integration::FixedStepRk4 ? "rk4" : "trapezoidal")
       << "\ndetection_tau = " << fmt_double(sc.sim.detection_tau)
       << "\nrecord_decimation = " << sc.sim.record_decimation << "\n";
    os << "\n[opt]\nv_ref = " << (sc.opt.v_ref ? fmt_double(*sc.opt.v_ref) : "prefault")
       << "\nw_tau1 = " << fmt_double(sc.opt.w_tau1) << "\nw_tau2 = " << fmt_double(sc.opt.w_tau2)
       << "\nw_tau3 = " << fmt_double(sc.opt.w_tau3)
       << "\nx_virtual_min = " << fmt_double(sc.opt.x_virtual_min)
       << "\nx_virtual_max = " << fmt_double(sc.opt.x_virtual_max)
       << "\nb_virtual_max = " << fmt_double(sc.opt.b_virtual_max) << "\npreset_sharing = "
       << (sc.opt.preset_sharing == PresetSharing::PerFault ? "per_fault" : "shared")
       << "\nmultistart = " << sc.opt.multistart << "\nmax_iterations = " << sc.opt.max_iterations
       << "\n";
    return os.str();
}

void write_scenario(const GridScenario& scenario, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write scenario file '" + path + "'");
    out << format_scenario(scenario);
}

DeviceTuning parse_tunings(std::istream& in, const std::string& origin) {
    std::vector<std::string> errors;
    ParsedFile file = tokenize(in, origin, errors);
    if (file.magic != "stvs-tunings") {
        errors.push_back(origin + ": expected magic 'stvs-tunings', got '" + file.magic + "'");
        throw ValidationError("cannot parse " + origin, errors);
    }
    if (file.version != 1) {
        errors.push_back(origin + ": unsupported schema version " + std::to_string(file.version));
        throw ValidationError("cannot parse " + origin, errors);
    }

    DeviceTuning t;
    for (std::size_t r = 0; r < file.records.size(); ++r) {
        const Record& rec = file.records[r];
        Fields f(rec, origin, errors);
        if (rec.section.empty()) {
            t.scenario_name = f.str("scenario", "", r == 0);
        } else if (rec.section == "gfm") {
            const int bus = f.integer("bus", 0, true);
            t.gfm_x_virtual[bus] = f.num("x_virtual", 0.0, true);
        } else if (rec.section == "gfl") {
            const int bus = f.integer("bus", 0, true);
            const double b = f.num("b_virtual", 0.0, true);
            t.gfl_b_virtual[bus] = b;
            t.gfl_x_virtual[bus] = b > 0.0 ? 1.0 / b : 0.0;
        } else if (rec.section == "gfm_preset") {
            GfmPreset p;
            p.bus = f.integer("bus", 0, true);
            p.fault_id = f.str("fault", "*", true);
            p.e_x = f.num("e_x", 0.0, true);
            p.e_y = f.num("e_y", 0.0, true);
            t.gfm_presets.push_back(p);
        } else if (rec.section == "gfl_preset") {
            GflPreset p;
            p.bus = f.integer("bus", 0, true);
            p.fault_id = f.str("fault", "*", true);
            p.i_x = f.num("i_x", 0.0, true);
            p.i_y = f.num("i_y", 0.0, true);
            t.gfl_presets.push_back(p);
        } else {
            errors.push_back(origin + ":" + std::to_string(rec.line) + ": unknown section [" +
                             rec.section + "]");
            continue;
        }
        f.finish();
    }
    if (!errors.empty()) {
        throw ValidationError("tunings '" + origin + "' failed validation", errors);
    }
    return t;
}

DeviceTuning load_tunings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open tunings file '" + path + "'");
    return parse_tunings(in, path);
}

std::string format_tunings(const DeviceTuning& t) {
    std::ostringstream os;
    os << "stvs-tunings 1\n\nscenario = " << t.scenario_name << "\n";
    for (const auto& [bus, xv] : t.gfm_x_virtual) {
        os << "\n[gfm]\nbus = " << bus << "\nx_virtual = " << fmt_double(xv) << "\n";
    }
    for (const auto& [bus, bv] : t.gfl_b_virtual) {
        os << "\n[gfl]\nbus = " << bus << "\nb_virtual = " << fmt_double(bv) << "\n";
    }
    for (const auto& p : t.gfm_presets) {
        os << "\n[gfm_preset]\nbus = " << p.bus << "\nfault = " << p.fault_id
           << "\ne_x = " << fmt_double(p.e_x) << "\ne_y = " << fmt_double(p.e_y) << "\n";
    }
    for (const auto& p : t.gfl_presets) {
        os << "\n[gfl_preset]\nbus = " << p.bus << "\nfault = " << p.fault_id
           << "\ni_x = " << fmt_double(p.i_x) << "\ni_y = " << fmt_double(p.i_y) << "\n";
    }
    return os.str();
}

void write_tunings(const DeviceTuning& tuning, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write tunings file '" + path + "'");
    out << format_tunings(tuning);
}

void check_tunings_against(const DeviceTuning& tuning, const GridScenario& sc) {
    std::vector<std::string> errors;
    auto fault_known = [&](const std::string& id) {
        return id == "*" || sc.find_fault(id) != nullptr;
    };

    for (const auto& [bus, xv] : tuning.gfm_x_virtual) {
        bool found = false;
        for (const auto& d : sc.gfm_devices) found |= (d.bus == bus);
        if (!found) errors.push_back("gfm tuning at bus " + std::to_string(bus) + ": no such device");
        if (xv < sc.opt.x_virtual_min - 1e-12 || xv > sc.opt.x_virtual_max + 1e-12) {
            errors.push_back("gfm tuning at bus " + std::to_string(bus) + ": x_virtual " +
                             fmt_double(xv) + " outside configured bounds");
        }
    }
    for (const auto& [bus, bv] : tuning.gfl_b_virtual) {
        bool found = false;
        for (const auto& d : sc.gfl_devices) found |= (d.bus == bus);
        if (!found) errors.push_back("gfl tuning at bus " + std::to_string(bus) + ": no such device");
        if (bv < -1e-12 || bv > sc.opt.b_virtual_max + 1e-12) {
            errors.push_back("gfl tuning at bus " + std::to_string(bus) + ": b_virtual " +
                             fmt_double(bv) + " outside configured bounds");
        }
    }
    for (const auto& p : tuning.gfm_presets) {
        if (!fault_known(p.fault_id)) {
            errors.push_back("gfm preset at bus " + std::to_string(p.bus) + ": unknown fault '" +
                             p.fault_id + "'");
        }
    }
    for (const auto& p : tuning.gfl_presets) {
        if (!fault_known(p.fault_id)) {
            errors.push_back("gfl preset at bus " + std::to_string(p.bus) + ": unknown fault '" +
                             p.fault_id + "'");
        }
    }
    for (const auto& d : sc.gfm_devices) {
        if (!tuning.gfm_x_virtual.count(d.bus)) {
            errors.push_back("gfm device at bus " + std::to_string(d.bus) + ": no tuning entry");
        }
    }
    for (const auto& d : sc.gfl_devices) {
        if (!tuning.gfl_b_virtual.count(d.bus)) {
            errors.push_back("gfl device at bus " + std::to_string(d.bus) + ": no tuning entry");
        }
    }
    if (!errors.empty()) {
        throw ValidationError("tunings do not match scenario '" + sc.name + "'", errors);
    }
}

}  // namespace stvs::io
