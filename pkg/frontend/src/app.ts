// Browser bootstrap: joins a session as one rater and walks the item queue,
// rendering score forms and pick tasks until the server reports done.

import { GradingApiError, GradingClient } from './api.js';
import { canSubmitPick, PickState } from './picks.js';
import { escapeHtml, PLACEHOLDER_URI, renderPrefix, renderScoreItem } from './render.js';
import { canSubmit, ScoreSelection, setDimension, toSubmission } from './scoring.js';
import { DIM_KEYS, DimKey, PickItem, SCORE_LEVELS, ScoreItem } from './types.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function showError(message: string): void {
  const box = el<HTMLDivElement>('error-box');
  box.textContent = message;
  box.hidden = message === '';
}

class RaterApp {
  private selection: ScoreSelection = {};
  private pick: PickState = { chosen: null };

  constructor(
    private readonly client: GradingClient,
    private readonly rater: number,
  ) {}

  async run(): Promise<void> {
    showError('');
    const item = await this.client.next(this.rater);
    const main = el<HTMLDivElement>('main-view');
    if ('done' in item) {
      main.innerHTML = '<p class="done">All items graded. Thank you.</p>';
      return;
    }
    if (item.kind === 'score') {
      this.renderScoreView(main, item);
    } else {
      this.renderPickView(main, item);
    }
  }

  private renderScoreView(main: HTMLDivElement, item: ScoreItem): void {
    this.selection = {};
    const dims = item.dimensions
      .map((spec, i) => {
        const key = DIM_KEYS[i];
        const radios = SCORE_LEVELS.map(
          (level) =>
            `<label><input type="radio" name="${key}" value="${level}"/> ` +
            `${level}: ${escapeHtml(spec.levels[String(level) as '1' | '3' | '5'])}</label>`,
        ).join('<br/>');
        return (
          `<fieldset class="dimension" data-key="${key}">` +
          `<legend>${escapeHtml(spec.name)}</legend>` +
          `<p class="explanation">${escapeHtml(spec.explanation)}</p>${radios}</fieldset>`
        );
      })
      .join('\n');
    main.innerHTML =
      `<p class="token">Grading item ${escapeHtml(item.method_token)}</p>` +
      `${renderScoreItem(item)}<form id="score-form">${dims}` +
      `<button id="submit-scores" type="button" disabled>Submit scores</button></form>`;

    main.querySelectorAll<HTMLInputElement>('input[type=radio]').forEach((radio) => {
      radio.addEventListener('change', () => {
        this.selection = setDimension(this.selection, radio.name as DimKey, Number(radio.value));
        el<HTMLButtonElement>('submit-scores').disabled = !canSubmit(this.selection);
      });
    });
    el<HTMLButtonElement>('submit-scores').addEventListener('click', async () => {
      try {
        await this.client.submitScores(this.rater, item.item, toSubmission(this.selection));
        await this.run();
      } catch (err) {
        showError(err instanceof GradingApiError ? `${err.code}: ${err.message}` : String(err));
      }
    });
  }

  private renderPickView(main: HTMLDivElement, item: PickItem): void {
    this.pick = { chosen: null };
    const cards = item.candidates
      .map(
        (candidate, i) =>
          `<label class="card"><input type="radio" name="pick" value="${i}"/>` +
          `<img src="${escapeHtml(candidate.uri)}" alt="candidate ${i + 1}" ` +
          `onerror="this.src='${PLACEHOLDER_URI}'"/></label>`,
      )
      .join('\n');
    main.innerHTML =
      `<p>Pick the image that best fits under paragraph ${item.paragraph_index}.</p>` +
      `<article class="prefix">${renderPrefix(item.prefix)}</article>` +
      `<div class="cards">${cards}</div>` +
      `<button id="submit-pick" type="button" disabled>Submit pick</button>`;

    main.querySelectorAll<HTMLInputElement>('input[name=pick]').forEach((radio) => {
      radio.addEventListener('change', () => {
        this.pick = { chosen: item.candidates[Number(radio.value)].id };
        el<HTMLButtonElement>('submit-pick').disabled = !canSubmitPick(this.pick);
      });
    });
    el<HTMLButtonElement>('submit-pick').addEventListener('click', async () => {
      if (this.pick.chosen === null) return;
      try {
        await this.client.submitPick(this.rater, item.slot, this.pick.chosen);
        await this.run();
      } catch (err) {
        showError(err instanceof GradingApiError ? `${err.code}: ${err.message}` : String(err));
      }
    });
  }
}

export function boot(): void {
  el<HTMLFormElement>('join-form').addEventListener('submit', (event) => {
    event.preventDefault();
    const base = el<HTMLInputElement>('server-url').value.replace(/\/$/, '');
    const session = el<HTMLInputElement>('session-id').value.trim();
    const rater = Number(el<HTMLInputElement>('rater-id').value);
    const app = new RaterApp(new GradingClient(base, session), rater);
    app.run().catch((err) => showError(String(err)));
  });
}

if (typeof document !== 'undefined') {
  document.addEventListener('DOMContentLoaded', boot);
}
