#pragma once

#include "embedkit/data.hpp"
#include "embedkit/datasets.hpp"
#include "embedkit/evaluator.hpp"
#include "embedkit/manifest.hpp"
#include "embedkit/model.hpp"
#include "embedkit/objectives.hpp"
#include "embedkit/optimizer.hpp"
#include "embedkit/random.hpp"
#include "embedkit/trainer.hpp"
#include "embedkit/version.hpp"
#include "embedkit/vocab.hpp"
