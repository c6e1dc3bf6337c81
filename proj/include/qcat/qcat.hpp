#pragma once

#include "config.hpp"
#include "io.hpp"
#include "pipeline.hpp"
