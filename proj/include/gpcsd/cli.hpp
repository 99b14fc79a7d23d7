#pragma once

namespace gpcsd {

int cli_main(int argc, char** argv);

}  // namespace gpcsd

#include "gpcsd/cli_impl.hpp"
