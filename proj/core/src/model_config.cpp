#include "ropdf/model_config.hpp"

#include <set>

#include <json.hpp>

#include "ropdf/error.hpp"

namespace ropdf {

using nlohmann::json;

namespace {

json distribution_json(const ScalarDistribution& d) {
    return std::visit(
        [](const auto& v) -> json {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Gaussian>) return {{"kind", "gaussian"}, {"mean", v.mean}, {"variance", v.variance}};
            else if constexpr (std::is_same_v<T, Gamma>) return {{"kind", "gamma"}, {"shape", v.shape}, {"scale", v.scale}};
            else if constexpr (std::is_same_v<T, Uniform>) return {{"kind", "uniform"}, {"lo", v.lo}, {"hi", v.hi}};
            else return {{"kind", "deterministic"}, {"value", v.value}, {"mollification", v.mollification}};
        },
        d);
}

}  // namespace

std::string model_to_json(const ModelSpec& model) {
    json j;
    j["name"] = model.name;
    j["dim"] = model.dim;
    j["params"] = model.params;
    j["qoi"] = model.qoi_index;
    // Large homogeneous systems are summarized as a run-length list.
    json initial = json::array();
    for (std::size_t i = 0; i < model.initial.per_component.size();) {
        const json d = distribution_json(model.initial.per_component[i]);
        std::size_t run = 1;
        while (i + run < model.initial.per_component.size() &&
               distribution_json(model.initial.per_component[i + run]) == d) {
            ++run;
        }
        initial.push_back({{"components", json::array({i, i + run - 1})}, {"distribution", d}});
        i += run;
    }
    j["initial"] = initial;
    if (model.initial.constraint) {
        const auto& c = *model.initial.constraint;
        j["constraint"] = {{"members", c.members}, {"solve_for", c.solve_for}, {"capped_sums", c.capped_sums}};
    }
    if (model.initial.correlation) j["correlation"] = *model.initial.correlation;
    if (model.decompose) {
        const ReducedForm r = model.decompose(model.qoi_index);
        json labels = json::array();
        for (const auto& t : r.terms) labels.push_back(t.label);
        j["closed_drift"] = r.closed_label;
        j["closure_terms"] = labels;
    }
    if (!model.notes.empty()) j["notes"] = model.notes;
    return j.dump();
}

ModelSpec model_from_json(std::string_view json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw InvalidArgument(std::string("model: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw InvalidArgument("model: expected a JSON object");
    static const std::set<std::string> derived = {"dim",         "initial",       "constraint", "correlation",
                                                  "closed_drift", "closure_terms", "notes"};
    for (const auto& [key, value] : j.items()) {
        if (key != "name" && key != "params" && key != "qoi" && !derived.count(key)) {
            throw InvalidArgument("model." + key + ": unknown field");
        }
    }
    if (!j.contains("name") || !j["name"].is_string()) throw InvalidArgument("model.name: required string");
    ParamMap overrides;
    if (j.contains("params")) {
        if (!j["params"].is_object()) throw InvalidArgument("model.params: expected an object");
        for (const auto& [key, value] : j["params"].items()) {
            if (!value.is_number()) throw InvalidArgument("model.params." + key + ": expected a number");
            overrides[key] = value.get<double>();
        }
    }
    ModelSpec m = builtin_model(j["name"].get<std::string>(), overrides);
    if (j.contains("qoi")) {
        const json& q = j["qoi"];
        std::size_t idx = 0;
        if (q.is_number_unsigned()) idx = q.get<std::size_t>();
        else if (q.is_string()) idx = component_index(m, q.get<std::string>());
        else throw InvalidArgument("model.qoi: expected a component index or name");
        if (idx >= m.dim) throw InvalidArgument("model.qoi: component index out of range");
        m.qoi_index = idx;
    }
    // Serialized definitions carry derived fields; they must describe the same model.
    const json full = json::parse(model_to_json(m));
    for (const auto& key : derived) {
        if (!j.contains(key)) continue;
        if (!full.contains(key) || full[key] != j[key]) {
            throw InvalidArgument("model." + key + ": does not match the built-in definition");
        }
    }
    return m;
}

}  // namespace ropdf
