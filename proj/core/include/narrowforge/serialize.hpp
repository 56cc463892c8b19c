#pragma once

#include <string>

#include "narrowforge/coupling.hpp"
#include "narrowforge/network.hpp"
#include "narrowforge/pipeline.hpp"
#include "narrowforge/pwl.hpp"
#include "narrowforge/ridge.hpp"
#include "narrowforge/sct.hpp"
#include "narrowforge/verify.hpp"

namespace narrowforge {

// JSON encoders/decoders. Numbers round-trip bit-exactly; malformed input
// raises ParseError with the offending location.

std::string to_json(const Network& net);
Network network_from_json(const std::string& text);

std::string to_json(const PwlFunction& f);
PwlFunction pwl_from_json(const std::string& text);

std::string to_json(const RidgeSum& sum);
RidgeSum ridge_sum_from_json(const std::string& text);

std::string to_json(const AcfSpec& spec);
AcfSpec acf_from_json(const std::string& text);

std::string to_json(const InnProgram& prog);
InnProgram inn_from_json(const std::string& text);

std::string to_json(const DiffeoTarget& target);
DiffeoTarget target_from_json(const std::string& text);

std::string to_json(const SliceTable& table);

std::string to_json(const VerifyReport& report);

std::string load_text(const std::string& path);
void save_text(const std::string& path, const std::string& text);

}  // namespace narrowforge
