#pragma once

#include <string>

namespace pheno::detail {

/// Contents of resources/phenotype_instructions.txt, embedded at build time.
const std::string& instructions_text();

}  // namespace pheno::detail
