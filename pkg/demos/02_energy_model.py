"""Vehicle energy physics: drive power, traversal energy, charge taper.

Run:  python3 demos/02_energy_model.py
"""

import math

from evpool import (DEFAULT_TYPES, Vehicle, apply_charging_step, charge_power_kw,
                    drive_power_w, estimate_charge_seconds, traversal_energy_kwh)

spec = DEFAULT_TYPES["model3"]
print(f"{spec.name}: {spec.battery_kwh} kWh battery, {spec.max_charge_kw} kW max charge")

print("\ndrive power (2 passengers):")
for kmh in (15, 25, 40, 60):
    p = drive_power_w(spec, kmh / 3.6, 2)
    print(f"  {kmh:3d} km/h -> {p / 1000:6.2f} kW "
          f"({traversal_energy_kwh(spec, 1000, 1000 / (kmh / 3.6), 2) * 1000:.0f} Wh/km)")

print("\ncharge power tapers linearly above 70% state of charge:")
for soc in (0.3, 0.7, 0.8, 0.9, 0.99):
    print(f"  soc {soc:.2f} -> {charge_power_kw(spec, soc, 72.0):5.1f} kW")

# forward-Euler charging against the closed-form exponential
vehicle = Vehicle(id=0, spec=spec, energy_kwh=0.7 * spec.battery_kwh, location=0)
minutes = 0
while vehicle.soc < 0.85:
    apply_charging_step(vehicle, 72.0, 60.0)
    minutes += 1
closed_form = 0.3 * (spec.battery_kwh / spec.max_charge_kw) * math.log(2.0) * 60.0
print(f"\n70% -> 85% charge: {minutes} simulated minutes "
      f"(closed form {closed_form:.1f} min)")
print(f"planner estimate for 20% -> 99%: "
      f"{estimate_charge_seconds(spec, 0.2, 0.99, 72.0) / 60:.1f} min")
