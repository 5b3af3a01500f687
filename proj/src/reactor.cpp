#include <fstream>
#include <sstream>

#include <json.hpp>

#include "snmpc/model.hpp"

namespace snmpc {

void check_params(const ReactorParams& p) {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v))
            throw std::runtime_error(std::string("reactor params: ") + name +
                                     " must be strictly positive");
    };
    positive(p.A1, "A1");
    positive(p.A2, "A2");
    positive(p.E1A, "E1A");
    positive(p.E2B, "E2B");
    positive(p.UA, "UA");
    positive(p.C_A0, "C_A0");
    positive(p.T0, "T0");
    positive(p.Cp_A, "Cp_A");
    positive(p.Cp_B, "Cp_B");
    positive(p.Cp_C, "Cp_C");
    positive(p.Cp_H2SO4, "Cp_H2SO4");
    positive(p.N_H2SO4, "N_H2SO4");
    if (!(p.dH_Rx1A <= 0.0))
        throw std::runtime_error("reactor params: dH_Rx1A must be <= 0 (reaction 1 is exothermic)");
    if (!(p.dH_Rx2B >= 0.0))
        throw std::runtime_error("reactor params: dH_Rx2B must be >= 0 (reaction 2 is endothermic)");
}

ReactorParams load_params(const std::string& json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("reactor params: invalid JSON: ") + e.what());
    }
    ReactorParams p;
    auto field = [&doc](const char* name) -> double {
        if (!doc.contains(name))
            throw std::runtime_error(std::string("reactor params: missing field \"") + name + "\"");
        if (!doc[name].is_number())
            throw std::runtime_error(std::string("reactor params: field \"") + name +
                                     "\" must be a number");
        return doc[name].get<double>();
    };
    p.A1 = field("A1");
    p.A2 = field("A2");
    p.E1A = field("E1A");
    p.E2B = field("E2B");
    p.UA = field("UA");
    p.C_A0 = field("C_A0");
    p.T0 = field("T0");
    p.dH_Rx1A = field("dH_Rx1A");
    p.dH_Rx2B = field("dH_Rx2B");
    p.Cp_A = field("Cp_A");
    p.Cp_B = field("Cp_B");
    p.Cp_C = field("Cp_C");
    p.Cp_H2SO4 = field("Cp_H2SO4");
    p.N_H2SO4 = field("N_H2SO4");
    check_params(p);
    return p;
}

ReactorParams load_params_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("reactor params: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_params(ss.str());
}

}  // namespace snmpc
