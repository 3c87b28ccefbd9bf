// The creativity slider is a linear map onto sampling temperature:
// hard left = 0.25 (conservative, corpus-like), hard right = 2.5 (risky).
export const TEMPERATURE_MIN = 0.25;
export const TEMPERATURE_MAX = 2.5;

export function sliderToTemperature(position: number): number {
  const x = Math.min(1, Math.max(0, position));
  return TEMPERATURE_MIN + x * (TEMPERATURE_MAX - TEMPERATURE_MIN);
}

export function temperatureToSlider(temperature: number): number {
  const t = Math.min(TEMPERATURE_MAX, Math.max(TEMPERATURE_MIN, temperature));
  return (t - TEMPERATURE_MIN) / (TEMPERATURE_MAX - TEMPERATURE_MIN);
}
