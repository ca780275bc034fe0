import { describe, expect, it } from "vitest";

import { validateOverrideLevel, validateRecipe } from "../src/validate.js";
import { validRecipe } from "./fixtures.js";

describe("recipe validation", () => {
  it("accepts the default-shaped recipe", () => {
    expect(validateRecipe(validRecipe())).toEqual([]);
  });

  it("flags a zero deadband on the exact field path", () => {
    const recipe = validRecipe();
    recipe.germination.deadbands.air_temp = 0;
    const errors = validateRecipe(recipe);
    expect(errors).toContainEqual({
      field: "germination.deadbands.air_temp",
      message: "deadband must be > 0",
    });
  });

  it("flags an inverted photoperiod", () => {
    const recipe = validRecipe();
    recipe.flowering.photoperiod = { on_hour: 22, off_hour: 6 };
    const errors = validateRecipe(recipe);
    expect(errors.some((e) => e.field === "flowering.photoperiod")).toBe(true);
  });

  it("flags setpoints outside the plausible range", () => {
    const recipe = validRecipe();
    recipe.vegetative.ph = 15;
    const errors = validateRecipe(recipe);
    expect(errors.some((e) => e.field === "vegetative.ph")).toBe(true);
  });

  it("flags a missing stage", () => {
    const recipe = validRecipe();
    delete (recipe as Record<string, unknown>).fruiting;
    expect(validateRecipe(recipe).some((e) => e.field === "fruiting")).toBe(true);
  });

  it("flags non-integer pollination counts", () => {
    const recipe = validRecipe();
    recipe.flowering.pollination = { pulses_per_day: 2.5, pulse_seconds: 60 };
    expect(validateRecipe(recipe).some((e) => e.field === "flowering.pollination")).toBe(true);
  });
});

describe("override level validation", () => {
  it("accepts relay 0/1 and duty [0,1]", () => {
    expect(validateOverrideLevel(true, 1)).toBeNull();
    expect(validateOverrideLevel(true, 0)).toBeNull();
    expect(validateOverrideLevel(false, 0.5)).toBeNull();
  });

  it("rejects fractional relay levels and out-of-range duties", () => {
    expect(validateOverrideLevel(true, 0.5)).toMatch(/0 or 1/);
    expect(validateOverrideLevel(false, 1.5)).toMatch(/\[0, 1\]/);
    expect(validateOverrideLevel(false, Number.NaN)).not.toBeNull();
  });
});
