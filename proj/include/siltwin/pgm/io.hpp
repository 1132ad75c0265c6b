#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "siltwin/common/error.hpp"
#include "siltwin/common/fileio.hpp"
#include "siltwin/pgm/network.hpp"

namespace siltwin::pgm {

SILTWIN_DEFINE_ERROR(BadNetworkFile);

// Network file layout:
//   {"variables":[{"name":..,"states":[..]}],
//    "cpts":[{"child":..,"parents":[..],"rows":[{"given":[..],"p":[..]}]}]}
// Rows are written in parent-configuration order so save(load(x)) == save(x).
inline nlohmann::json to_json(const BayesNet& net) {
    nlohmann::json j;
    j["variables"] = nlohmann::json::array();
    for (const Variable& v : net.variables())
        j["variables"].push_back({{"name", v.name}, {"states", v.states}});
    j["cpts"] = nlohmann::json::array();
    for (std::size_t i = 0; i < net.size(); ++i) {
        const Cpt& c = net.cpt(static_cast<int>(i));
        nlohmann::json jc;
        jc["child"] = net.variable(c.child).name;
        jc["parents"] = nlohmann::json::array();
        for (int p : c.parents) jc["parents"].push_back(net.variable(p).name);
        jc["rows"] = nlohmann::json::array();
        for (std::size_t r = 0; r < c.rows.size(); ++r) {
            nlohmann::json jr;
            jr["given"] = nlohmann::json::array();
            std::size_t rem = r;
            std::vector<std::string> given(c.parents.size());
            for (std::size_t k = c.parents.size(); k-- > 0;) {
                const Variable& pv = net.variable(c.parents[k]);
                given[k] = pv.states[rem % pv.states.size()];
                rem /= pv.states.size();
            }
            for (auto& g : given) jr["given"].push_back(g);
            jr["p"] = c.rows[r];
            jc["rows"].push_back(std::move(jr));
        }
        j["cpts"].push_back(std::move(jc));
    }
    return j;
}

inline BayesNet net_from_json(const nlohmann::json& j) {
    try {
        NetworkSpec spec;
        for (const auto& jv : j.at("variables")) {
            Variable v;
            v.name = jv.at("name").get<std::string>();
            v.states = jv.at("states").get<std::vector<std::string>>();
            spec.variables.push_back(std::move(v));
        }
        for (const auto& jc : j.at("cpts")) {
            CptSpec cs;
            cs.child = jc.at("child").get<std::string>();
            cs.parents = jc.at("parents").get<std::vector<std::string>>();
            for (const auto& jr : jc.at("rows")) {
                CptRowSpec row;
                row.given = jr.at("given").get<std::vector<std::string>>();
                row.p = jr.at("p").get<std::vector<double>>();
                cs.rows.push_back(std::move(row));
            }
            spec.cpts.push_back(std::move(cs));
        }
        return build_network(spec);
    } catch (const nlohmann::json::exception& e) {
        throw BadNetworkFile(std::string("malformed network file: ") + e.what());
    }
}

inline std::string save_network(const BayesNet& net) { return to_json(net).dump(2) + "\n"; }

inline BayesNet load_network(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw BadNetworkFile("network file is not valid JSON");
    return net_from_json(j);
}

inline void save_network_file(const BayesNet& net, const std::string& path) {
    write_file(path, save_network(net));
}

inline BayesNet load_network_file(const std::string& path) {
    return load_network(read_file(path));
}

}  // namespace siltwin::pgm
