#pragma once

#include "amigo/checks.hpp"
#include "amigo/core.hpp"
#include "amigo/counter.hpp"
#include "amigo/hypergrad.hpp"
#include "amigo/inner.hpp"
#include "amigo/metrics.hpp"
#include "amigo/oracle.hpp"
#include "amigo/outer.hpp"
#include "amigo/problems.hpp"
