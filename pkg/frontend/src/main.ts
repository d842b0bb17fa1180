// Steering console wiring: reconnecting client, input handling, and a
// requestAnimationFrame render loop.

import { ControlClient } from "./client.js";
import { CoalescedSender, MAX_UI_SPEED, stepYaw } from "./controls.js";
import { projectFrame, View, Viewport } from "./projection.js";
import { drawScene } from "./render.js";
import { ViewModel } from "./viewmodel.js";

const canvas = document.getElementById("scene") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const speedSlider = document.getElementById("speed") as HTMLInputElement;
const speedReadout = document.getElementById("speed-readout")!;
const targetReadout = document.getElementById("target-readout")!;
const fpsReadout = document.getElementById("fps-readout")!;
const statusBanner = document.getElementById("status")!;
const viewToggle = document.getElementById("view-toggle") as HTMLButtonElement;

const vm = new ViewModel();
const url = `ws://${location.host}/control`;
const client = new ControlClient(url, (u) => new WebSocket(u) as never, vm, {
  onStatusText: (t) => showBanner(t),
  onErrorText: (t) => showBanner(`server error: ${t}`),
});
const sender = new CoalescedSender((msg) => client.sendControl(msg));

let view: View = "top";
let keys: Record<string, boolean> = {};
let lastTick = performance.now();

speedSlider.max = String(MAX_UI_SPEED);
speedSlider.step = "0.1";
speedSlider.value = String(vm.control.speed);

function showBanner(text: string): void {
  statusBanner.textContent = text;
  statusBanner.classList.add("visible");
  setTimeout(() => statusBanner.classList.remove("visible"), 4000);
}

speedSlider.addEventListener("input", () => {
  vm.control.speed = Number(speedSlider.value);
  sender.update(vm.control.speed, vm.control.direction, performance.now());
});

window.addEventListener("keydown", (e) => {
  if (e.key === "ArrowLeft" || e.key === "ArrowRight") keys[e.key] = true;
});
window.addEventListener("keyup", (e) => {
  keys[e.key] = false;
});
canvas.addEventListener("pointerdown", (e) => {
  // drag sets the target heading from the canvas center
  const rect = canvas.getBoundingClientRect();
  const dx = e.clientX - rect.left - canvas.width / 2;
  const dy = e.clientY - rect.top - canvas.height / 2;
  vm.control.direction = Math.atan2(dx, -dy);
  sender.update(vm.control.speed, vm.control.direction, performance.now());
});
viewToggle.addEventListener("click", () => {
  view = view === "top" ? "side" : "top";
  viewToggle.textContent = view === "top" ? "top-down" : "side";
});

function tick(now: number): void {
  const dt = Math.min((now - lastTick) / 1000, 0.1);
  lastTick = now;
  if (keys.ArrowLeft || keys.ArrowRight) {
    const dir = keys.ArrowLeft ? -1 : 1;
    vm.control.direction = stepYaw(vm.control.direction, dir, dt);
    sender.update(vm.control.speed, vm.control.direction, now);
  }
  sender.flush(now);

  if (vm.frame && vm.skeleton) {
    const root = vm.frame.positions[0];
    const vp: Viewport = {
      width: canvas.width,
      height: canvas.height,
      scale: 120,
      center: view === "top" ? [root[0], root[2]] : [root[2], 1.0],
    };
    drawScene(ctx, projectFrame(vm.frame, vm.skeleton, view, vp,
                                vm.control.direction),
              canvas.width, canvas.height);
    vm.markRendered(now);
  }
  speedReadout.textContent =
    `${vm.displaySpeed().toFixed(2)} m/s (target ${vm.control.speed.toFixed(2)})`;
  targetReadout.textContent =
    `heading ${(vm.control.direction * 180 / Math.PI).toFixed(0)} deg`;
  fpsReadout.textContent = `${vm.measuredFps(now)} fps / ${client.fsm.state}`;
  requestAnimationFrame(tick);
}

client.connect();
requestAnimationFrame(tick);
