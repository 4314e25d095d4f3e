#include "flowkit/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>

#include "flowkit/util.hpp"

namespace flowkit::sim {

namespace {

using ir::FlowsheetGraph;
using ir::Stream;
using ir::Unit;
using ir::UnitCatalog;

constexpr double kEps = 1e-12;

double spec_or(const std::map<std::string, double>& specs, const std::string& key,
               double fallback) {
    auto it = specs.find(key);
    return it != specs.end() ? it->second : fallback;
}

struct Adjacency {
    // unit -> outgoing (stream id, destination unit)
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> edges;
    std::vector<std::string> units;
};

Adjacency build_adjacency(const FlowsheetGraph& g) {
    Adjacency adj;
    for (const auto& u : g.units) {
        adj.edges[u.id];
        adj.units.push_back(u.id);
    }
    std::sort(adj.units.begin(), adj.units.end());
    std::vector<const Stream*> streams;
    for (const auto& s : g.streams) streams.push_back(&s);
    std::sort(streams.begin(), streams.end(),
              [](const Stream* a, const Stream* b) { return a->id < b->id; });
    for (const Stream* s : streams) {
        if (s->source && s->destination) {
            adj.edges[*s->source].emplace_back(s->id, *s->destination);
        }
    }
    return adj;
}

}  // namespace

double StreamState::total_flow() const {
    double t = 0.0;
    for (double f : flows) t += f;
    return t;
}

int SimModel::component_index(const std::string& name) const {
    for (std::size_t i = 0; i < components.size(); ++i) {
        if (components[i] == name) return static_cast<int>(i);
    }
    return -1;
}

std::vector<std::vector<std::string>> enumerate_cycles(const FlowsheetGraph& graph) {
    // Elementary cycles via DFS anchored at each unit; only units >= the
    // anchor (sorted order) may appear, so each cycle is found exactly once.
    constexpr std::size_t kCycleCap = 100000;
    Adjacency adj = build_adjacency(graph);
    std::map<std::string, int> order;
    for (std::size_t i = 0; i < adj.units.size(); ++i) order[adj.units[i]] = static_cast<int>(i);

    std::vector<std::vector<std::string>> cycles;
    std::vector<std::string> path_streams;
    std::set<std::string> on_path;

    std::function<void(const std::string&, const std::string&)> dfs =
        [&](const std::string& anchor, const std::string& current) {
            if (cycles.size() >= kCycleCap) return;
            for (const auto& [stream_id, next] : adj.edges[current]) {
                if (cycles.size() >= kCycleCap) return;
                if (next == anchor) {
                    auto cycle = path_streams;
                    cycle.push_back(stream_id);
                    std::sort(cycle.begin(), cycle.end());
                    cycles.push_back(std::move(cycle));
                    continue;
                }
                if (order[next] < order[anchor] || on_path.count(next)) continue;
                on_path.insert(next);
                path_streams.push_back(stream_id);
                dfs(anchor, next);
                path_streams.pop_back();
                on_path.erase(next);
            }
        };

    for (const auto& anchor : adj.units) {
        on_path.clear();
        on_path.insert(anchor);
        path_streams.clear();
        dfs(anchor, anchor);
    }
    std::sort(cycles.begin(), cycles.end());
    cycles.erase(std::unique(cycles.begin(), cycles.end()), cycles.end());
    return cycles;
}

std::vector<std::string> select_tear_streams(const FlowsheetGraph& graph) {
    auto cycles = enumerate_cycles(graph);
    std::vector<std::string> tears;
    std::vector<bool> covered(cycles.size(), false);
    std::size_t uncovered = cycles.size();
    while (uncovered > 0) {
        std::map<std::string, std::size_t> counts;
        for (std::size_t i = 0; i < cycles.size(); ++i) {
            if (covered[i]) continue;
            for (const auto& sid : cycles[i]) counts[sid]++;
        }
        std::string best;
        std::size_t best_count = 0;
        for (const auto& [sid, n] : counts) {  // map order: smallest id wins ties
            if (n > best_count) {
                best = sid;
                best_count = n;
            }
        }
        tears.push_back(best);
        for (std::size_t i = 0; i < cycles.size(); ++i) {
            if (covered[i]) continue;
            if (std::find(cycles[i].begin(), cycles[i].end(), best) != cycles[i].end()) {
                covered[i] = true;
                --uncovered;
            }
        }
    }
    std::sort(tears.begin(), tears.end());
    return tears;
}

namespace {

StreamState mix_states(const std::vector<StreamState>& inlets, int n_components) {
    StreamState out;
    out.flows.assign(n_components, 0.0);
    double total = 0.0;
    double t_weighted = 0.0;
    double t_plain = 0.0;
    double p_min = 0.0;
    bool have_p = false;
    for (const auto& in : inlets) {
        for (int i = 0; i < n_components && i < static_cast<int>(in.flows.size()); ++i) {
            out.flows[i] += in.flows[i];
        }
        double f = in.total_flow();
        total += f;
        t_weighted += f * in.temperature;
        t_plain += in.temperature;
        if (!have_p || in.pressure < p_min) {
            p_min = in.pressure;
            have_p = true;
        }
    }
    out.temperature = total > kEps ? t_weighted / total
                      : inlets.empty() ? 298.15
                                       : t_plain / static_cast<double>(inlets.size());
    out.pressure = have_p ? p_min : 101.325;
    return out;
}

}  // namespace

std::vector<StreamState> evaluate_unit(const UnitRuntime& unit,
                                       const std::vector<StreamState>& inlet_states,
                                       int component_count) {
    const int n = component_count;
    const std::size_t n_out = unit.outlets.size();
    auto all_same = [&](const StreamState& s) {
        return std::vector<StreamState>(n_out, s);
    };

    auto outlet_port = [&](std::size_t idx) -> std::string {
        auto it = unit.outlet_ports.find(unit.outlets[idx]);
        return it != unit.outlet_ports.end() ? it->second : std::string();
    };

    if (unit.type == "Mixer" || unit.type == "Tank") {
        return all_same(mix_states(inlet_states, n));
    }
    if (unit.type == "Splitter" || unit.type == "RefluxDrum") {
        StreamState in = mix_states(inlet_states, n);
        std::vector<double> fractions(n_out, 0.0);
        bool any_spec = false;
        double sum = 0.0;
        for (std::size_t i = 0; i < n_out; ++i) {
            auto it = unit.specs.find("split:" + unit.outlets[i]);
            if (it != unit.specs.end()) {
                fractions[i] = it->second;
                any_spec = true;
            }
            sum += fractions[i];
        }
        if (!any_spec) {
            for (auto& f : fractions) f = n_out > 0 ? 1.0 / static_cast<double>(n_out) : 0.0;
        } else {
            for (double f : fractions) {
                if (f < 0.0 || f > 1.0) {
                    throw SpecError(unit.id, "split fraction outside [0,1]");
                }
            }
            if (std::fabs(sum - 1.0) > 1e-9) {
                throw SpecError(unit.id, "split fractions must sum to 1");
            }
        }
        std::vector<StreamState> out(n_out, in);
        for (std::size_t i = 0; i < n_out; ++i) {
            for (auto& f : out[i].flows) f *= fractions[i];
        }
        return out;
    }
    if (unit.type == "Pump" || unit.type == "Compressor" || unit.type == "Valve") {
        StreamState s = mix_states(inlet_states, n);
        double default_dp = unit.type == "Valve" ? -50.0 : 100.0;
        double dp = spec_or(unit.specs, "delta_p", default_dp);
        if (unit.type == "Valve" && dp > 0.0) {
            throw SpecError(unit.id, "valve pressure change must be <= 0");
        }
        s.pressure += dp;
        return all_same(s);
    }
    if (unit.type == "Heater" || unit.type == "Cooler" || unit.type == "HeatExchanger" ||
        unit.type == "Condenser") {
        StreamState s = mix_states(inlet_states, n);
        double default_dt = unit.type == "Cooler" || unit.type == "Condenser" ? -10.0 : 10.0;
        if (unit.specs.count("t_out")) {
            s.temperature = unit.specs.at("t_out");
        } else {
            s.temperature += spec_or(unit.specs, "delta_t", default_dt);
        }
        if (s.temperature <= 0.0) {
            throw SpecError(unit.id, "outlet temperature must be positive");
        }
        return all_same(s);
    }
    if (unit.type == "Separator" || unit.type == "ThreePhaseSeparator" ||
        unit.type == "Reboiler") {
        StreamState in = mix_states(inlet_states, n);
        if (unit.type == "Reboiler") in.temperature += spec_or(unit.specs, "delta_t", 10.0);
        if (n_out <= 1) return all_same(in);
        // First outlet takes the vapor split (port "Vapour"/"Boilup" when
        // assigned, else positional); the rest share the remainder.
        std::size_t vapor_idx = 0;
        for (std::size_t i = 0; i < n_out; ++i) {
            std::string port = outlet_port(i);
            if (port == "Vapour" || port == "Boilup") {
                vapor_idx = i;
                break;
            }
        }
        std::vector<StreamState> out(n_out, in);
        for (std::size_t i = 0; i < n_out; ++i) out[i].flows.assign(n, 0.0);
        double k_default = spec_or(unit.specs, "k", 0.5);
        for (int c = 0; c < n; ++c) {
            double k = spec_or(unit.specs, "k:" + std::to_string(c), k_default);
            if (k < 0.0 || k > 1.0) throw SpecError(unit.id, "split fraction outside [0,1]");
            double vapor = in.flows[c] * k;
            double rest = in.flows[c] - vapor;
            out[vapor_idx].flows[c] = vapor;
            double share = rest / static_cast<double>(n_out - 1);
            for (std::size_t i = 0; i < n_out; ++i) {
                if (i != vapor_idx) out[i].flows[c] = share;
            }
        }
        return out;
    }
    if (unit.type == "Reactor") {
        StreamState in = mix_states(inlet_states, n);
        if (unit.key_component.empty() || unit.stoichiometry.empty()) {
            return all_same(in);  // no reaction spec: pass-through
        }
        double conversion = spec_or(unit.specs, "conversion", 0.0);
        if (conversion < 0.0 || conversion > 1.0) {
            throw SpecError(unit.id, "conversion outside [0,1]");
        }
        auto key_it = unit.stoichiometry.find(unit.key_component);
        if (key_it == unit.stoichiometry.end() || key_it->second >= 0.0) {
            throw SpecError(unit.id, "key component must have a negative stoichiometric coefficient");
        }
        // Component indices are resolved by the caller into "stoich:<idx>" specs
        // when built from a model; here stoichiometry is name-keyed and the
        // state is index-keyed, so the runtime carries index hints.
        StreamState out_state = in;
        double key_flow = 0.0;
        auto key_idx_it = unit.specs.find("key_index");
        int key_idx = key_idx_it != unit.specs.end() ? static_cast<int>(key_idx_it->second) : -1;
        if (key_idx >= 0 && key_idx < n) key_flow = in.flows[key_idx];
        double extent = conversion * key_flow / std::fabs(key_it->second);
        for (const auto& [comp, coeff] : unit.stoichiometry) {
            auto idx_it = unit.specs.find("index:" + comp);
            if (idx_it == unit.specs.end()) continue;
            int idx = static_cast<int>(idx_it->second);
            if (idx < 0 || idx >= n) continue;
            out_state.flows[idx] += extent * coeff;
            if (out_state.flows[idx] < -1e-9) {
                throw SpecError(unit.id, "conversion infeasible: component flow driven negative");
            }
            out_state.flows[idx] = std::max(0.0, out_state.flows[idx]);
        }
        return all_same(out_state);
    }
    if (unit.type == "DistillationColumnTemplate" || unit.type == "ColumnTower") {
        StreamState feed = mix_states(inlet_states, n);
        if (n_out == 0) return {};
        if (n_out == 1) return all_same(feed);

        std::vector<std::size_t> distillate_idx, sidedraw_idx;
        std::size_t bottoms_idx = n_out - 1;
        bool port_info = false;
        for (std::size_t i = 0; i < n_out; ++i) {
            std::string port = outlet_port(i);
            if (port.empty()) continue;
            port_info = true;
            if (port == "Distillate" || port == "Overhead") distillate_idx.push_back(i);
            if (port == "SideDraw") sidedraw_idx.push_back(i);
            if (port == "Bottoms") bottoms_idx = i;
        }
        if (!port_info) {
            distillate_idx.push_back(0);
            for (std::size_t i = 1; i + 1 < n_out; ++i) sidedraw_idx.push_back(i);
            bottoms_idx = n_out - 1;
        }
        if (distillate_idx.empty()) distillate_idx.push_back(0);

        std::vector<StreamState> out(n_out, feed);
        for (auto& o : out) o.flows.assign(n, 0.0);
        double recovery_default = spec_or(unit.specs, "recovery", 0.5);
        double draw_fraction = spec_or(unit.specs, "side_draw_fraction", 0.1);
        if (recovery_default < 0.0 || recovery_default > 1.0 || draw_fraction < 0.0 ||
            draw_fraction > 1.0) {
            throw SpecError(unit.id, "recovery fraction outside [0,1]");
        }
        for (int c = 0; c < n; ++c) {
            double r = spec_or(unit.specs, "recovery:" + std::to_string(c), recovery_default);
            if (r < 0.0 || r > 1.0) throw SpecError(unit.id, "recovery fraction outside [0,1]");
            double overhead = feed.flows[c] * r;
            double per_distillate = overhead / static_cast<double>(distillate_idx.size());
            for (std::size_t i : distillate_idx) out[i].flows[c] = per_distillate;
            double remaining = feed.flows[c] - overhead;
            for (std::size_t i : sidedraw_idx) {
                double draw = remaining * draw_fraction;
                out[i].flows[c] = draw;
                remaining -= draw;
            }
            out[bottoms_idx].flows[c] = remaining;
        }
        return out;
    }
    throw SpecError(unit.id, "no executor model for unit type \"" + unit.type + "\"");
}

SimModel build_model(const FlowsheetGraph& graph, const UnitCatalog& catalog,
                     const synth::ComponentKB& kb, const SolverConfig& config) {
    SimModel model;
    model.case_name = graph.case_name;
    model.property_package = graph.property_package;
    model.config = config;

    auto resolved = synth::resolve_components_lenient(graph.components, kb);
    std::set<std::string> canon;
    for (const auto& [raw, c] : resolved) canon.insert(c);
    model.components.assign(canon.begin(), canon.end());

    for (const auto& u : graph.units) {
        if (!catalog.has(u.type)) {
            throw SpecError(u.id, "unknown unit type \"" + u.type + "\"");
        }
        const auto sig = catalog.entry(u.type).signature;
        UnitRuntime rt;
        rt.id = u.id;
        rt.type = u.type;
        for (const auto* s : graph.inlets_of(u.id)) rt.inlets.push_back(s->id);
        for (const auto* s : graph.outlets_of(u.id)) rt.outlets.push_back(s->id);
        std::sort(rt.inlets.begin(), rt.inlets.end());
        std::sort(rt.outlets.begin(), rt.outlets.end());
        if (sig.inlets_over(static_cast<int>(rt.inlets.size())) ||
            static_cast<int>(rt.inlets.size()) < sig.min_inlets) {
            throw SpecError(u.id, "inlet count " + std::to_string(rt.inlets.size()) +
                                      " violates port signature");
        }
        if (sig.outlets_over(static_cast<int>(rt.outlets.size())) ||
            static_cast<int>(rt.outlets.size()) < sig.min_outlets) {
            throw SpecError(u.id, "outlet count " + std::to_string(rt.outlets.size()) +
                                      " violates port signature");
        }
        for (const auto* s : graph.outlets_of(u.id)) {
            if (s->extras.contains("template_src_port") &&
                s->extras.at("template_src_port").is_string()) {
                rt.outlet_ports[s->id] = s->extras.at("template_src_port").get<std::string>();
            }
        }
        model.units.push_back(std::move(rt));
    }
    std::sort(model.units.begin(), model.units.end(),
              [](const UnitRuntime& a, const UnitRuntime& b) { return a.id < b.id; });

    for (const auto& s : graph.streams) {
        model.stream_endpoints[s.id] = {s.source, s.destination};
        if (!s.source) {
            StreamState state;
            state.flows.assign(model.components.size(), 0.0);
            std::vector<std::string> hints = s.component_hints;
            if (hints.empty()) hints = graph.components;
            double total = spec_or(s.specs, "molar_flow", 100.0);
            if (!hints.empty()) {
                double each = total / static_cast<double>(hints.size());
                for (const auto& h : hints) {
                    auto res = synth::resolve_components_lenient({h}, kb);
                    int idx = model.component_index(res.at(h));
                    if (idx < 0) {
                        throw BuildError(s.id, "feed stream \"" + s.id +
                                                   "\" names component \"" + h +
                                                   "\" absent from the case");
                    }
                    state.flows[idx] += each;
                }
            }
            state.temperature = spec_or(s.specs, "temperature", 298.15);
            state.pressure = spec_or(s.specs, "pressure", 101.325);
            model.feeds[s.id] = state;
        }
    }

    model.tear_set = select_tear_streams(graph);
    return model;
}

namespace {

double parse_number(const std::string& token, const std::string& line) {
    try {
        std::size_t pos = 0;
        double v = std::stod(token, &pos);
        if (pos != token.size()) throw std::invalid_argument(token);
        return v;
    } catch (...) {
        throw BuildError(line, "malformed number \"" + token + "\" in: " + line);
    }
}

}  // namespace

SimModel parse_refsim_script(const std::string& script_text, const UnitCatalog& catalog,
                             const synth::ComponentKB& kb, const SolverConfig& config) {
    SimModel model;
    model.config = config;

    struct PendingUnit {
        std::string type;
        std::vector<std::string> inlets, outlets;
        std::map<std::string, std::string> inlet_ports, outlet_ports;  // stream -> port
        std::map<std::string, double> specs;
    };
    std::map<std::string, PendingUnit> units;
    std::set<std::string> streams;
    std::map<std::string, std::pair<std::optional<std::string>, std::optional<std::string>>>
        endpoints;
    std::map<std::string, std::map<std::string, double>> feed_flows;  // stream -> canonical -> flow
    std::map<std::string, double> feed_t, feed_p;
    std::set<std::string> case_components;

    // Fixed ports hold one stream; repeatable ports hold any number.
    auto port_capacity_ok = [&](const std::string& unit_type, const std::string& port,
                                bool inlet_side, const PendingUnit& pu) -> bool {
        const auto& entry = catalog.entry(unit_type);
        const auto& names = inlet_side ? entry.inlet_ports : entry.outlet_ports;
        const ir::PortName* found = nullptr;
        for (const auto& p : names) {
            if (p.name == port) {
                found = &p;
                break;
            }
        }
        if (!found) return false;  // unknown port name for this type
        if (found->repeatable) return true;
        const auto& assigned = inlet_side ? pu.inlet_ports : pu.outlet_ports;
        for (const auto& [sid, pname] : assigned) {
            if (pname == port) return false;  // occupied
        }
        return true;
    };

    std::istringstream in(script_text);
    std::string line;
    int line_no = 0;
    bool solved_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        auto tokens = util::split_script_line(line);
        if (tokens.empty()) continue;
        const std::string& op = tokens[0];
        auto fail = [&](const std::string& msg) -> void {
            throw BuildError("line " + std::to_string(line_no), msg + " (line " +
                                                                     std::to_string(line_no) +
                                                                     ": " + line + ")");
        };
        if (op == "CASE" && tokens.size() == 2) {
            model.case_name = tokens[1];
        } else if (op == "PACKAGE" && tokens.size() == 2) {
            model.property_package = tokens[1];
        } else if (op == "COMPONENT" && tokens.size() == 2) {
            // Sequential case initialization: unknown component names abort.
            if (!kb.has_canonical(tokens[1])) {
                fail("case initialization failed: component \"" + tokens[1] +
                     "\" is not in the component database");
            }
            case_components.insert(tokens[1]);
        } else if (op == "CREATE" && tokens.size() >= 3 && tokens[1] == "UNIT") {
            if (tokens.size() != 5 || tokens[3] != "TYPE") fail("malformed CREATE UNIT");
            if (!catalog.has(tokens[4])) fail("unknown unit type \"" + tokens[4] + "\"");
            if (units.count(tokens[2])) fail("duplicate unit \"" + tokens[2] + "\"");
            units[tokens[2]].type = tokens[4];
        } else if (op == "CREATE" && tokens.size() == 3 && tokens[1] == "STREAM") {
            if (streams.count(tokens[2])) fail("duplicate stream \"" + tokens[2] + "\"");
            streams.insert(tokens[2]);
            endpoints[tokens[2]] = {std::nullopt, std::nullopt};
        } else if (op == "ATTACH" && tokens.size() == 8 && tokens[1] == "STREAM" &&
                   tokens[4] == "UNIT" && tokens[6] == "PORT") {
            const std::string& sid = tokens[2];
            const std::string& dir = tokens[3];
            const std::string& uid = tokens[5];
            const std::string& port = tokens[7];
            if (!streams.count(sid)) fail("stream \"" + sid + "\" attached before creation");
            auto uit = units.find(uid);
            if (uit == units.end()) fail("unit \"" + uid + "\" referenced before creation");
            PendingUnit& pu = uit->second;
            if (dir == "TO") {
                if (endpoints[sid].second) fail("stream \"" + sid + "\" already has a destination");
                if (!port_capacity_ok(pu.type, port, true, pu)) {
                    throw SpecError(uid, "cannot attach stream \"" + sid + "\" to port \"" + port +
                                             "\" (unknown or occupied)");
                }
                pu.inlets.push_back(sid);
                pu.inlet_ports[sid] = port;
                endpoints[sid].second = uid;
            } else if (dir == "FROM") {
                if (endpoints[sid].first) fail("stream \"" + sid + "\" already has a source");
                if (!port_capacity_ok(pu.type, port, false, pu)) {
                    throw SpecError(uid, "cannot attach stream \"" + sid + "\" to port \"" + port +
                                             "\" (unknown or occupied)");
                }
                pu.outlets.push_back(sid);
                pu.outlet_ports[sid] = port;
                endpoints[sid].first = uid;
            } else {
                fail("malformed ATTACH direction \"" + dir + "\"");
            }
        } else if (op == "SPEC" && tokens.size() == 7 && tokens[1] == "UNIT" &&
                   tokens[3] == "KEY" && tokens[5] == "VALUE") {
            auto uit = units.find(tokens[2]);
            if (uit == units.end()) fail("unit \"" + tokens[2] + "\" referenced before creation");
            uit->second.specs[tokens[4]] = parse_number(tokens[6], line);
        } else if (op == "FEED" && tokens.size() >= 4 && tokens[1] == "STREAM") {
            const std::string& sid = tokens[2];
            if (!streams.count(sid)) fail("stream \"" + sid + "\" fed before creation");
            if (tokens[3] == "COMPONENT" && tokens.size() == 7 && tokens[5] == "FLOW") {
                auto resolved = synth::resolve_components_lenient({tokens[4]}, kb);
                const std::string canonical = resolved.at(tokens[4]);
                if (!case_components.count(canonical)) {
                    fail("feed names component \"" + tokens[4] + "\" absent from the case");
                }
                feed_flows[sid][canonical] += parse_number(tokens[6], line);
            } else if (tokens[3] == "TEMPERATURE" && tokens.size() == 5) {
                feed_t[sid] = parse_number(tokens[4], line);
            } else if (tokens[3] == "PRESSURE" && tokens.size() == 5) {
                feed_p[sid] = parse_number(tokens[4], line);
            } else {
                fail("malformed FEED");
            }
        } else if (op == "SOLVE") {
            solved_seen = true;
            for (std::size_t i = 1; i + 1 < tokens.size(); i += 2) {
                if (tokens[i] == "TOLERANCE") {
                    model.config.tolerance = parse_number(tokens[i + 1], line);
                } else if (tokens[i] == "MAXITER") {
                    model.config.max_iterations =
                        static_cast<int>(parse_number(tokens[i + 1], line));
                }
            }
        } else {
            fail("unrecognized command \"" + op + "\"");
        }
    }
    if (!solved_seen) {
        throw BuildError("script", "script has no SOLVE command");
    }

    model.components.assign(case_components.begin(), case_components.end());

    for (auto& [uid, pu] : units) {
        const auto sig = catalog.entry(pu.type).signature;
        UnitRuntime rt;
        rt.id = uid;
        rt.type = pu.type;
        rt.inlets = pu.inlets;
        rt.outlets = pu.outlets;
        std::sort(rt.inlets.begin(), rt.inlets.end());
        std::sort(rt.outlets.begin(), rt.outlets.end());
        rt.outlet_ports = pu.outlet_ports;
        rt.specs = pu.specs;
        if (sig.inlets_over(static_cast<int>(rt.inlets.size())) ||
            static_cast<int>(rt.inlets.size()) < sig.min_inlets) {
            throw SpecError(uid, "inlet count " + std::to_string(rt.inlets.size()) +
                                     " violates port signature");
        }
        if (sig.outlets_over(static_cast<int>(rt.outlets.size())) ||
            static_cast<int>(rt.outlets.size()) < sig.min_outlets) {
            throw SpecError(uid, "outlet count " + std::to_string(rt.outlets.size()) +
                                     " violates port signature");
        }
        model.units.push_back(std::move(rt));
    }
    std::sort(model.units.begin(), model.units.end(),
              [](const UnitRuntime& a, const UnitRuntime& b) { return a.id < b.id; });

    for (const auto& [sid, ep] : endpoints) {
        model.stream_endpoints[sid] = ep;
        if (!ep.first) {
            StreamState state;
            state.flows.assign(model.components.size(), 0.0);
            auto ff = feed_flows.find(sid);
            if (ff != feed_flows.end()) {
                for (const auto& [comp, flow] : ff->second) {
                    int idx = model.component_index(comp);
                    if (idx >= 0) state.flows[idx] = flow;
                }
            }
            if (feed_t.count(sid)) state.temperature = feed_t.at(sid);
            if (feed_p.count(sid)) state.pressure = feed_p.at(sid);
            model.feeds[sid] = state;
        }
    }

    // Tear selection over the reconstructed topology.
    FlowsheetGraph g;
    for (const auto& [uid, pu] : units) {
        Unit u;
        u.id = uid;
        u.type = pu.type;
        g.units.push_back(u);
    }
    for (const auto& [sid, ep] : endpoints) {
        Stream s;
        s.id = sid;
        s.source = ep.first;
        s.destination = ep.second;
        s.cls = !ep.first ? ir::StreamClass::Feed
                : !ep.second ? ir::StreamClass::Product
                             : ir::StreamClass::Intermediate;
        g.streams.push_back(s);
    }
    model.tear_set = select_tear_streams(g);
    return model;
}

SolveResult solve_flowsheet(const SimModel& model) {
    SolveResult result;
    const int n = static_cast<int>(model.components.size());

    std::set<std::string> tears(model.tear_set.begin(), model.tear_set.end());

    // Topological order of units over the tear-cut edge set.
    std::map<std::string, std::set<std::string>> preds;
    for (const auto& u : model.units) preds[u.id];
    for (const auto& [sid, ep] : model.stream_endpoints) {
        if (ep.first && ep.second && !tears.count(sid)) {
            preds[*ep.second].insert(*ep.first);
        }
    }
    std::vector<std::string> order;
    std::set<std::string> remaining;
    for (const auto& [id, _] : preds) remaining.insert(id);
    while (!remaining.empty()) {
        std::string pick;
        for (const auto& id : remaining) {
            bool ready = true;
            for (const auto& p : preds[id]) {
                if (remaining.count(p)) {
                    ready = false;
                    break;
                }
            }
            if (ready) {
                pick = id;
                break;
            }
        }
        if (pick.empty()) {
            throw BuildError("model", "tear set does not break every cycle");
        }
        order.push_back(pick);
        remaining.erase(pick);
    }

    // Initial guesses: zero flow at feed-average temperature.
    double t0 = 298.15;
    if (!model.feeds.empty()) {
        double sum = 0.0;
        for (const auto& [sid, st] : model.feeds) sum += st.temperature;
        t0 = sum / static_cast<double>(model.feeds.size());
    }
    std::map<std::string, StreamState> states;
    for (const auto& [sid, ep] : model.stream_endpoints) {
        StreamState s;
        s.flows.assign(n, 0.0);
        s.temperature = t0;
        s.pressure = 101.325;
        states[sid] = s;
    }
    for (const auto& [sid, st] : model.feeds) states[sid] = st;

    std::map<std::string, const UnitRuntime*> unit_by_id;
    for (const auto& u : model.units) unit_by_id[u.id] = &u;

    auto tear_vector = [&](const std::map<std::string, StreamState>& st) {
        std::vector<double> v;
        for (const auto& sid : model.tear_set) {
            const auto& s = st.at(sid);
            for (double f : s.flows) v.push_back(f);
            v.push_back(s.temperature);
            v.push_back(s.pressure);
        }
        return v;
    };
    auto set_tears = [&](const std::vector<double>& v) {
        std::size_t i = 0;
        for (const auto& sid : model.tear_set) {
            auto& s = states[sid];
            for (auto& f : s.flows) f = v[i++];
            s.temperature = v[i++];
            s.pressure = v[i++];
        }
    };

    std::vector<double> x_prev, g_prev;
    bool converged = model.tear_set.empty();
    int iter = 0;
    double residual = 0.0;
    const int max_iter = std::max(1, model.config.max_iterations);

    for (iter = 1; iter <= max_iter; ++iter) {
        std::vector<double> x_k = tear_vector(states);
        for (const auto& uid : order) {
            const UnitRuntime& unit = *unit_by_id.at(uid);
            std::vector<StreamState> inlet_states;
            for (const auto& sid : unit.inlets) inlet_states.push_back(states.at(sid));
            auto outs = evaluate_unit(unit, inlet_states, n);
            for (std::size_t i = 0; i < unit.outlets.size() && i < outs.size(); ++i) {
                states[unit.outlets[i]] = outs[i];
            }
        }
        if (model.tear_set.empty()) {
            converged = true;
            residual = 0.0;
            result.diagnostics.push_back("iteration 1 residual 0.0");
            break;
        }
        std::vector<double> g_k = tear_vector(states);
        residual = 0.0;
        for (std::size_t i = 0; i < x_k.size(); ++i) {
            double denom = std::max(std::fabs(g_k[i]), 1e-10);
            residual = std::max(residual, std::fabs(g_k[i] - x_k[i]) / denom);
        }
        result.diagnostics.push_back("iteration " + std::to_string(iter) + " residual " +
                                     util::format_number(residual));
        if (residual <= model.config.tolerance) {
            converged = true;
            break;
        }
        if (model.config.acceleration == Acceleration::Wegstein && !x_prev.empty()) {
            std::vector<double> x_next(g_k.size());
            for (std::size_t i = 0; i < g_k.size(); ++i) {
                double dx = x_k[i] - x_prev[i];
                double q = 0.0;  // q = 0 reduces to direct substitution
                if (std::fabs(dx) > kEps) {
                    double s = (g_k[i] - g_prev[i]) / dx;
                    if (std::fabs(s - 1.0) > kEps) {
                        q = s / (s - 1.0);
                        q = std::min(0.0, std::max(-5.0, q));  // bounded damping
                    }
                }
                x_next[i] = q * x_k[i] + (1.0 - q) * g_k[i];
            }
            set_tears(x_next);
        }
        // Direct substitution leaves the computed tear values in place.
        x_prev = x_k;
        g_prev = g_k;
    }
    if (iter > max_iter) iter = max_iter;

    result.converged = converged;
    result.iterations = iter;
    result.residual = residual;
    result.stream_states = states;
    if (!converged) {
        result.diagnostics.push_back("not converged after " + std::to_string(iter) +
                                     " iterations, residual " + util::format_number(residual));
    }
    return result;
}

ir::json SolveResult::stream_table(const std::vector<std::string>& components) const {
    ir::json table = ir::json::object();
    for (const auto& [sid, state] : stream_states) {
        ir::json entry = ir::json::object();
        ir::json flows = ir::json::object();
        for (std::size_t i = 0; i < components.size() && i < state.flows.size(); ++i) {
            flows[components[i]] = state.flows[i];
        }
        entry["flows"] = flows;
        entry["pressure"] = state.pressure;
        entry["temperature"] = state.temperature;
        entry["total_flow"] = state.total_flow();
        table[sid] = entry;
    }
    return table;
}

ExecResult execute_refsim(const std::string& script_text, const UnitCatalog& catalog,
                          const synth::ComponentKB& kb, const SolverConfig& config) {
    ExecResult result;
    try {
        SimModel model = parse_refsim_script(script_text, catalog, kb, config);
        SolveResult solve = solve_flowsheet(model);
        result.log = solve.diagnostics;
        if (!solve.converged) {
            result.ok = false;
            result.error = "solver did not converge (residual " +
                           util::format_number(solve.residual) + ")";
        } else {
            result.ok = true;
        }
        result.solve = std::move(solve);
        result.model = std::move(model);
    } catch (const std::exception& e) {
        result.ok = false;
        result.error = e.what();
        result.log.push_back(std::string("error: ") + e.what());
    }
    return result;
}

}  // namespace flowkit::sim
