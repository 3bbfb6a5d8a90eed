#pragma once

#include "lccn/core.hpp"
#include "lccn/datagen.hpp"
#include "lccn/classifier.hpp"
#include "lccn/noise_model.hpp"
#include "lccn/sampler.hpp"
#include "lccn/metrics.hpp"
#include "lccn/trainers.hpp"
#include "lccn/io.hpp"
