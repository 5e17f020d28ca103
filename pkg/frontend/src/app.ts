/** Console entry point: one state store, socket events and user input both
 * funnel through the reducer, and rendering is a function of the state. */
import { ConsoleEvent, ConsoleState, commandFrame, initialState, reduce } from "./model";
import { COMMAND_LIMITS, CommandField, SKILLS, SkillName } from "./protocol";
import { drawScene, drawSparkline, renderPanel } from "./render";
import { TeleopSocket } from "./socket";

let state: ConsoleState = initialState();

const url = new URLSearchParams(location.search).get("ws") ?? "ws://127.0.0.1:8787";
const scene = document.getElementById("scene") as HTMLCanvasElement;
const spark = document.getElementById("sparkline") as HTMLCanvasElement;

function render(): void {
  renderPanel(document, state);
  drawScene(scene, state.lastState);
  drawSparkline(spark, state.rewardHistory);
}

function dispatch(event: ConsoleEvent): void {
  state = reduce(state, event);
  render();
}

const socket = new TeleopSocket({
  url,
  onFrame: (frame) => dispatch({ kind: "server-frame", frame }),
  onOpen: () => dispatch({ kind: "socket-open" }),
  onClose: () => dispatch({ kind: "socket-close" }),
});

for (const name of SKILLS) {
  const button = document.getElementById(`btn-${name}`) as HTMLButtonElement | null;
  button?.addEventListener("click", () => {
    dispatch({ kind: "transition-requested", skill: name as SkillName });
    if (state.pendingTransition === name) {
      const problem = socket.send({ type: "transition", skill: name as SkillName });
      if (problem === null) dispatch({ kind: "transition-sent", skill: name as SkillName });
    }
  });
}

for (const field of Object.keys(COMMAND_LIMITS) as CommandField[]) {
  const slider = document.getElementById(`slider-${field}`) as HTMLInputElement | null;
  if (!slider) continue;
  const [lo, hi] = COMMAND_LIMITS[field];
  slider.min = String(lo);
  slider.max = String(hi);
  slider.step = "0.01";
  slider.value = String(state.sliders[field]);
  slider.addEventListener("input", () => {
    dispatch({ kind: "slider", field, value: Number(slider.value) });
    socket.send(commandFrame(state));
  });
}

document.getElementById("btn-pause")?.addEventListener("click", () => {
  socket.send({ type: "pause" });
});
document.getElementById("btn-reset")?.addEventListener("click", () => {
  const seed = Number((document.getElementById("reset-seed") as HTMLInputElement)?.value ?? 0);
  socket.send({ type: "reset", scenario_seed: Math.trunc(seed) });
});

render();
