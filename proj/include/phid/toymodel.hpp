#pragma once

#include "phid/toy/config.hpp"
#include "phid/toy/interventions.hpp"
#include "phid/toy/model.hpp"
#include "phid/toy/tasks.hpp"
#include "phid/toy/train.hpp"
