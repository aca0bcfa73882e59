#pragma once

// Small JSON Schema subset checker: type, required, properties, additionalProperties (bool),
// items, enum, minimum, maximum and local $ref. Enough for the schema shipped in docs/.

#include "json.hpp"

#include <string>
#include <vector>

namespace testing_support {

using nlohmann::json;

inline bool type_matches(const json& v, const std::string& t) {
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "boolean") return v.is_boolean();
    if (t == "null") return v.is_null();
    if (t == "integer") return v.is_number_integer() || (v.is_number_float() && v.get<double>() == static_cast<double>(static_cast<long long>(v.get<double>())));
    if (t == "number") return v.is_number();
    return false;
}

inline void check_schema(const json& v, const json& s, const json& root, const std::string& where,
                         std::vector<std::string>& errs) {
    if (s.contains("$ref")) {
        const auto ref = s["$ref"].get<std::string>();
        check_schema(v, root.at(json::json_pointer(ref.substr(1))), root, where, errs);
        return;
    }
    if (s.contains("type")) {
        bool ok = false;
        if (s["type"].is_array()) {
            for (const auto& t : s["type"]) ok = ok || type_matches(v, t.get<std::string>());
        } else {
            ok = type_matches(v, s["type"].get<std::string>());
        }
        if (!ok) {
            errs.push_back(where + ": expected type " + s["type"].dump());
            return;
        }
    }
    if (s.contains("enum")) {
        bool found = false;
        for (const auto& e : s["enum"]) found = found || e == v;
        if (!found) errs.push_back(where + ": not in enum");
    }
    if (v.is_number()) {
        if (s.contains("minimum") && v.get<double>() < s["minimum"].get<double>()) errs.push_back(where + ": below minimum");
        if (s.contains("maximum") && v.get<double>() > s["maximum"].get<double>()) errs.push_back(where + ": above maximum");
    }
    if (v.is_object()) {
        if (s.contains("required"))
            for (const auto& k : s["required"])
                if (!v.contains(k.get<std::string>())) errs.push_back(where + ": missing " + k.get<std::string>());
        for (const auto& [k, sub] : v.items()) {
            if (s.contains("properties") && s["properties"].contains(k)) {
                check_schema(sub, s["properties"][k], root, where + "." + k, errs);
            } else if (s.contains("additionalProperties")) {
                const auto& ap = s["additionalProperties"];
                if (ap.is_boolean() && !ap.get<bool>()) errs.push_back(where + ": unexpected key " + k);
                else if (ap.is_object()) check_schema(sub, ap, root, where + "." + k, errs);
            }
        }
    }
    if (v.is_array() && s.contains("items"))
        for (std::size_t k = 0; k < v.size(); ++k) check_schema(v[k], s["items"], root, where + "[" + std::to_string(k) + "]", errs);
}

inline std::vector<std::string> validate(const json& v, const json& schema) {
    std::vector<std::string> errs;
    check_schema(v, schema, schema, "$", errs);
    return errs;
}

} // namespace testing_support
