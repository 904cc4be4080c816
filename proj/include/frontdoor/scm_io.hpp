#pragma once

#include "frontdoor/scm.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>

namespace frontdoor::scm {

// Line-oriented SCM text format ('#' starts a comment):
//   node <name> <domain_size> [unobserved]
//   edge <parent> <child>
//   cpt <name> <parent values...> <prob for each value...>
// Each cpt line fills one row; parent values follow edge declaration order.
// Every row of every CPT must be given exactly once.

DiscreteScm parse_scm(std::istream& in);
DiscreteScm parse_scm_string(const std::string& text);
DiscreteScm load_scm(const std::filesystem::path& path);
std::string format_scm(const DiscreteScm& scm);

}  // namespace frontdoor::scm
