// Canvas drawing of a projected scene; geometry lives in projection.ts.

import { Scene } from "./projection.js";

export function drawScene(ctx: CanvasRenderingContext2D, scene: Scene,
                          width: number, height: number): void {
  ctx.clearRect(0, 0, width, height);
  ctx.strokeStyle = "#9aa7b0";
  ctx.lineWidth = 1;
  ctx.strokeRect(0.5, 0.5, width - 1, height - 1);

  if (scene.arrow) {
    ctx.strokeStyle = "#2f81f7";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(scene.arrow.from[0], scene.arrow.from[1]);
    ctx.lineTo(scene.arrow.to[0], scene.arrow.to[1]);
    ctx.stroke();
    ctx.fillStyle = "#2f81f7";
    ctx.beginPath();
    ctx.arc(scene.arrow.to[0], scene.arrow.to[1], 3, 0, 2 * Math.PI);
    ctx.fill();
  }

  ctx.strokeStyle = "#e6edf3";
  ctx.lineWidth = 2;
  for (const [[x0, y0], [x1, y1]] of scene.bones) {
    ctx.beginPath();
    ctx.moveTo(x0, y0);
    ctx.lineTo(x1, y1);
    ctx.stroke();
  }

  ctx.fillStyle = "#ffd33d";
  for (const [x, y] of scene.contactDots) {
    ctx.beginPath();
    ctx.arc(x, y, 5, 0, 2 * Math.PI);
    ctx.fill();
  }
}
